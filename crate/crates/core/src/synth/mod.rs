//! Procedural slides with tile-level ground truth, patient-grouped datasets,
//! and selection recall against that ground truth.

mod dataset;
mod slide;

pub use self::dataset::{
    dataset_specs, generate_dataset, load_slide, pretraining_specs, read_manifest, write_manifest, DatasetConfig, ManifestEntry, Split,
};
pub use self::slide::{generate_slide, selection_recall, GroundTruth, SlideClass, SyntheticSlideSpec, TextureParams, TruthLabel};
