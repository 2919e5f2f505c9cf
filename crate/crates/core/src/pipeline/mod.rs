//! Two-stage screening/grading pipeline: preprocessing into LOW and HIGH
//! bags, variant training, prediction, evaluation and the ablation suite.

mod eval;
mod experiment;
mod model;
mod preprocess;
mod variant;

pub use self::eval::{evaluate, EvalReport, SlideRecord};
pub use self::experiment::{
    prepare_dataset, raw_from_dir, raw_from_specs, run_ablation_suite, run_ablation_suite_with, AblationRow, AblationTable, Experiment,
    ExperimentConfig, Extractors, ModelConfig, PreparedDataset, PretrainSetup, Stage1, TrainedVariant,
};
pub use self::model::{predict, select_tiles, Prediction, SelectionConfig, TwoStageModel, META_FILE, STAGE1_FILE, STAGE2_FILE};
pub use self::preprocess::{
    extract_tissue_tiles, mean_rgb, normalize_slide, reference_stats, PreparedSlide, PreprocessConfig, RawSlide, LOW_FACTOR,
};
pub use self::variant::{SelectionMethod, Variant, VariantSpec};
