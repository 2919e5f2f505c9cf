use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{PreparedSlide, SelectionMethod, Variant};
use crate::error::{Error, Result};
use crate::imaging::ColorStats;
use crate::linalg::argmax;
use crate::mil::{mil_forward, AttentionMap, MilModel, MilOutput};
use crate::seed::derive_seed;
use crate::selection::{select_att_cluster, select_by_blue_ratio, select_top_n_by_attention, SelectionResult};
use crate::synth::SlideClass;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    /// Tiles handed to stage 2 per slide.
    pub budget: usize,
    /// PCA dimension before clustering.
    pub pca_dim: usize,
    pub clusters: usize,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self { budget: 16, pca_dim: 8, clusters: 4 }
    }
}

/// Chooses stage-2 tiles from a stage-1 forward pass over the slide's LOW
/// tiles. Returned references are at the HIGH scale.
pub fn select_tiles(
    method: SelectionMethod,
    slide: &PreparedSlide,
    stage1: &MilOutput,
    cfg: &SelectionConfig,
    seed: u64,
) -> Result<SelectionResult> {
    if cfg.budget == 0 {
        return Err(Error::EmptySelectionBudget);
    }
    let refs = &slide.tile_refs;
    match method {
        SelectionMethod::BlueRatio => select_by_blue_ratio(refs, &slide.low, &stage1.alpha, cfg.budget),
        SelectionMethod::AttTopk => select_top_n_by_attention(refs, &stage1.alpha, cfg.budget),
        SelectionMethod::AttCluster => {
            let kmeans_seed = derive_seed(seed, &format!("kmeans/{}", slide.slide_id));
            select_att_cluster(refs, &stage1.alpha, &stage1.features, cfg.pca_dim, cfg.clusters, cfg.budget, kmeans_seed)
        }
    }
}

/// Screening model at LOW scale plus, for two-stage variants, a grading
/// model over selected HIGH tiles. For one-stage the screening model is the
/// 3-class grader itself.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoStageModel {
    pub variant: Variant,
    pub stage1: MilModel,
    pub stage2: Option<MilModel>,
    pub selection_method: Option<SelectionMethod>,
    pub selection: SelectionConfig,
    /// Color target used when the slides were normalized.
    pub reference: ColorStats,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct Prediction {
    pub class: SlideClass,
    pub probs: Vec<f64>,
    /// Stage-1 attention over every tissue tile.
    pub alpha: AttentionMap,
    pub selection: SelectionResult,
    /// Set when no tile passed the tissue filter and the slide defaulted to
    /// benign.
    pub no_tissue: bool,
}

/// Deterministic, dropout-free prediction.
pub fn predict(model: &TwoStageModel, slide: &PreparedSlide) -> Result<Prediction> {
    if model.stage2.is_some() && model.selection.budget == 0 {
        return Err(Error::EmptySelectionBudget);
    }
    if slide.is_empty() {
        let mut probs = vec![0.0; SlideClass::ALL.len()];
        probs[SlideClass::Benign.index()] = 1.0;
        let alpha = AttentionMap { weights: vec![] };
        return Ok(Prediction { class: SlideClass::Benign, probs, selection: SelectionResult::empty(alpha.clone()), alpha, no_tissue: true });
    }
    let out1 = mil_forward(&slide.low, &model.stage1)?;
    let (probs, selection) = match (&model.stage2, model.selection_method) {
        (Some(stage2), Some(method)) => {
            let selection = select_tiles(method, slide, &out1, &model.selection, model.seed)?;
            let bag = slide.high_bag(&selection.indices, 0);
            (mil_forward(&bag.tiles, stage2)?.probs, selection)
        }
        (None, _) => (out1.probs.clone(), SelectionResult::empty(out1.alpha.clone())),
        (Some(_), None) => return Err(Error::InvalidArgument("two-stage model without a selection method".into())),
    };
    let class = SlideClass::from_index(argmax(&probs))
        .ok_or_else(|| Error::InvalidArgument(format!("model predicts {} classes", probs.len())))?;
    Ok(Prediction { class, probs, alpha: out1.alpha, selection, no_tissue: false })
}

#[derive(Serialize, Deserialize)]
struct ModelMeta {
    variant: Variant,
    selection_method: Option<SelectionMethod>,
    selection: SelectionConfig,
    reference: ColorStats,
    seed: u64,
}

pub const STAGE1_FILE: &str = "stage1.milw";
pub const STAGE2_FILE: &str = "stage2.milw";
pub const META_FILE: &str = "model.json";

impl TwoStageModel {
    /// Writes `model.json` plus one tensor file per stage into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let meta = ModelMeta {
            variant: self.variant,
            selection_method: self.selection_method,
            selection: self.selection.clone(),
            reference: self.reference,
            seed: self.seed,
        };
        fs::write(dir.join(META_FILE), serde_json::to_string_pretty(&meta)? + "\n")?;
        self.stage1.save(dir.join(STAGE1_FILE))?;
        if let Some(stage2) = &self.stage2 {
            stage2.save(dir.join(STAGE2_FILE))?;
        }
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let meta: ModelMeta = serde_json::from_str(&fs::read_to_string(dir.join(META_FILE))?)?;
        let stage2_path = dir.join(STAGE2_FILE);
        let stage2 = if meta.variant.spec().two_stage { Some(MilModel::load(stage2_path)?) } else { None };
        Ok(Self {
            variant: meta.variant,
            stage1: MilModel::load(dir.join(STAGE1_FILE))?,
            stage2,
            selection_method: meta.selection_method,
            selection: meta.selection,
            reference: meta.reference,
            seed: meta.seed,
        })
    }
}
