//! Attention-based MIL head: attention pooling, softmax classifier, instance
//! dropout, cross-entropy gradients, Adam, and the per-stage training loop.

mod adam;
mod attention;
mod classifier;
mod dropout;
mod model;
mod train;

pub use self::adam::{adam_step, AdamConfig, AdamState};
pub use self::attention::{attention_forward, bag_embed, AttentionMap, AttentionParams};
pub use self::classifier::{classify, ClassifierParams};
pub use self::dropout::{dropout_calls_on_this_thread, dropout_mask, instance_dropout};
pub use self::model::{head_forward, head_loss_and_grads, loss_and_grads, mil_forward, Bag, HeadGrads, MilModel, MilOutput};
pub use self::train::{evaluate_bags, fit, pick_initialization, EpochLog, FitOutcome, PlateauScheduler, TrainConfig, EPOCH_LOG_HEADER};
