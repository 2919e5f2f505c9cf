//! Two-stage attention-based multiple-instance learning for tiled gigapixel
//! images: preprocessing, a small trainable tile encoder, attention pooling
//! with instance dropout, cluster-guided tile selection, and the
//! screening/grading pipeline with its ablation variants.

pub mod error;
pub mod features;
pub mod imaging;
pub mod linalg;
pub mod mil;
pub mod par;
pub mod params;
pub mod pipeline;
pub mod seed;
pub mod selection;
pub mod synth;
pub mod tensor_io;

pub use error::{Error, Result};
