//! Tile encoder producing per-instance feature vectors, and its supervised
//! pretraining on instance-labelled tiles.

mod extractor;
mod pretrain;

pub use self::extractor::{extract_features, ConvLayer, ExtractorParams, TileActivations, Trainable, CHANNELS, REDUCED_CHANNELS};
pub use self::pretrain::{pretrain_extractor, pretrain_with_head, tile_accuracy, PretrainConfig, PretrainReport, Pretrained};

/// `k × d` matrix of instance features; row `i` belongs to the bag's `i`-th tile.
pub type InstanceFeatures = crate::linalg::Matrix;
