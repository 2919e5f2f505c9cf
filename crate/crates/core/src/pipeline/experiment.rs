use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::preprocess::{extract_tissue_tiles, mean_rgb, normalize_slide, reference_stats, PreprocessConfig, PreparedSlide, RawSlide};
use super::{evaluate, select_tiles, EvalReport, SelectionConfig, TwoStageModel, Variant};
use crate::error::{Error, Result};
use crate::features::{pretrain_extractor, ExtractorParams, PretrainConfig, PretrainReport};
use crate::imaging::{ColorStats, RgbImage};
use crate::mil::{fit, mil_forward, pick_initialization, Bag, EpochLog, FitOutcome, MilModel, MilOutput, TrainConfig};
use crate::seed::{derive_seed, rng_for};
use crate::synth::{generate_slide, load_slide, ManifestEntry, SlideClass, Split, SyntheticSlideSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Attention hidden width h.
    pub hidden: usize,
    /// Instance feature dimension d.
    pub feature_dim: usize,
    /// Head initialisations tried per stage; the one with the lowest
    /// validation loss after warm-up is trained to completion.
    pub init_candidates: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { hidden: 32, feature_dim: 64, init_candidates: 6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainSetup {
    /// Extra synthetic slides per class that supply instance-labelled tiles.
    pub slides_per_class: usize,
    /// Tiles sampled per tile class (benign tissue, low, high).
    pub tiles_per_class: usize,
    pub train: PretrainConfig,
}

impl Default for PretrainSetup {
    fn default() -> Self {
        Self { slides_per_class: 20, tiles_per_class: 200, train: PretrainConfig::default() }
    }
}

/// Everything that shapes training, shared by every variant of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct ExperimentConfig {
    pub preprocess: PreprocessConfig,
    pub selection: SelectionConfig,
    pub model: ModelConfig,
    pub pretrain: PretrainSetup,
    /// Per-stage training settings; `seed` is replaced by a derived seed.
    pub train: TrainConfig,
}

/// Normalized slides for every split, plus the instance-labelled tile set.
#[derive(Debug, Clone)]
pub struct PreparedDataset {
    pub train: Vec<PreparedSlide>,
    pub val: Vec<PreparedSlide>,
    pub test: Vec<PreparedSlide>,
    pub reference: ColorStats,
    pub pretrain_high: Vec<RgbImage>,
    pub pretrain_low: Vec<RgbImage>,
    pub pretrain_labels: Vec<usize>,
}

impl PreparedDataset {
    pub fn split(&self, split: Split) -> &[PreparedSlide] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

/// Renders synthetic slides and cuts their tissue tiles, keeping the ground
/// truth alongside.
pub fn raw_from_specs(specs: &[SyntheticSlideSpec], cfg: &PreprocessConfig) -> Result<Vec<RawSlide>> {
    crate::par::map(specs, |spec| {
        let (image, truth) = generate_slide(spec)?;
        let mut raw = extract_tissue_tiles(&spec.slide_id, spec.class, &image, cfg)?;
        raw.truth = Some(truth);
        Ok(raw)
    })
}

/// Loads the slides listed in a dataset manifest and cuts their tissue tiles.
pub fn raw_from_dir(dir: &Path, entries: &[ManifestEntry], cfg: &PreprocessConfig) -> Result<Vec<(RawSlide, Split)>> {
    crate::par::map(entries, |entry| {
        let (image, truth) = load_slide(dir, entry, cfg.tile_size)?;
        let mut raw = extract_tissue_tiles(&entry.slide_id, entry.class, &image, cfg)?;
        raw.truth = Some(truth);
        Ok((raw, entry.split))
    })
}

/// Normalizes every slide toward the pooled statistics of the training
/// slides and samples a class-balanced instance-labelled tile set.
pub fn prepare_dataset(slides: Vec<(RawSlide, Split)>, pretrain: Vec<RawSlide>, setup: &PretrainSetup, seed: u64) -> Result<PreparedDataset> {
    let train_raw: Vec<RawSlide> = slides.iter().filter(|(_, s)| *s == Split::Train).map(|(r, _)| r.clone()).collect();
    let reference = reference_stats(&train_raw)?;
    let mut out = PreparedDataset {
        train: vec![],
        val: vec![],
        test: vec![],
        reference,
        pretrain_high: vec![],
        pretrain_low: vec![],
        pretrain_labels: vec![],
    };
    for (raw, split) in slides {
        let prepared = normalize_slide(raw, &reference)?;
        match split {
            Split::Train => out.train.push(prepared),
            Split::Val => out.val.push(prepared),
            Split::Test => out.test.push(prepared),
        }
    }

    let prepared: Vec<PreparedSlide> = pretrain.into_iter().map(|r| normalize_slide(r, &reference)).collect::<Result<_>>()?;
    let mut by_class: Vec<Vec<(usize, usize)>> = vec![vec![]; 3];
    for (si, slide) in prepared.iter().enumerate() {
        let Some(truth) = &slide.truth else { continue };
        for (ti, t) in slide.tile_refs.iter().enumerate() {
            if let Some(c) = truth.label_at(t.x, t.y).and_then(|l| l.tile_class()) {
                by_class[c].push((si, ti));
            }
        }
    }
    let mut rng = rng_for(seed, "pretrain-tiles");
    for (c, pool) in by_class.iter_mut().enumerate() {
        pool.shuffle(&mut rng);
        for &(si, ti) in pool.iter().take(setup.tiles_per_class) {
            out.pretrain_high.push(prepared[si].high[ti].clone());
            out.pretrain_low.push(prepared[si].low[ti].clone());
            out.pretrain_labels.push(c);
        }
    }
    Ok(out)
}

fn stage1_label(class: SlideClass) -> usize {
    usize::from(class.is_cancer())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct Stage1Key {
    dropout: bool,
    pretrain: bool,
}

impl Stage1Key {
    fn tag(self) -> String {
        format!("stage1/dropout={}/pretrain={}", self.dropout, self.pretrain)
    }
}

/// A trained screening model with its forward passes over every slide.
#[derive(Debug, Clone)]
pub struct Stage1 {
    pub model: MilModel,
    pub log: Vec<EpochLog>,
    pub outputs: HashMap<String, MilOutput>,
}

#[derive(Debug, Clone)]
pub struct Extractors {
    pub low: ExtractorParams,
    pub high: ExtractorParams,
    pub reports: Option<(PretrainReport, PretrainReport)>,
}

#[derive(Debug, Clone)]
pub struct TrainedVariant {
    pub model: TwoStageModel,
    /// `(stage name, per-epoch log)` for each trained stage.
    pub logs: Vec<(String, Vec<EpochLog>)>,
}

/// One seed's training state. Extractors and screening models are shared
/// between variants that agree on the relevant toggles.
pub struct Experiment<'a> {
    pub data: &'a PreparedDataset,
    pub cfg: ExperimentConfig,
    pub seed: u64,
    extractors: HashMap<bool, Extractors>,
    stage1: HashMap<Stage1Key, Stage1>,
}

impl<'a> Experiment<'a> {
    pub fn new(data: &'a PreparedDataset, cfg: ExperimentConfig, seed: u64) -> Result<Self> {
        cfg.preprocess.validate()?;
        cfg.train.validate()?;
        for (name, split) in [("train", &data.train), ("validation", &data.val), ("test", &data.test)] {
            if split.is_empty() {
                return Err(Error::EmptySplit(name.into()));
            }
        }
        Ok(Self { data, cfg, seed, extractors: HashMap::new(), stage1: HashMap::new() })
    }

    fn stage_config(&self, tag: &str, dropout_rate: f64) -> TrainConfig {
        TrainConfig { dropout_rate, seed: derive_seed(self.seed, tag), ..self.cfg.train.clone() }
    }

    fn fit_stage(
        &self,
        tag: &str,
        extractor: ExtractorParams,
        classes: usize,
        (train, val): (&[Bag], &[Bag]),
        dropout_rate: f64,
        mean_rgb: [u8; 3],
    ) -> Result<FitOutcome> {
        let cfg = self.stage_config(tag, dropout_rate);
        let candidates: Vec<MilModel> = (0..self.cfg.model.init_candidates.max(1))
            .map(|r| MilModel::new(extractor.clone(), self.cfg.model.hidden, classes, derive_seed(self.seed, &format!("{tag}/init/{r}"))))
            .collect();
        let best = pick_initialization(&candidates, train, val, &cfg, mean_rgb)?;
        fit(candidates[best].clone(), train, val, &cfg, mean_rgb)
    }

    /// LOW and HIGH extractors, pretrained on the tile set or freshly
    /// initialized.
    pub fn extractors(&mut self, pretrain: bool) -> Result<&Extractors> {
        if !self.extractors.contains_key(&pretrain) {
            let d = self.cfg.model.feature_dim;
            let low_side = self.cfg.preprocess.low_tile_size();
            let low = ExtractorParams::init(low_side, d, derive_seed(self.seed, "extractor-low"))?;
            let high = ExtractorParams::init(self.cfg.preprocess.tile_size, d, derive_seed(self.seed, "extractor-high"))?;
            let ex = if pretrain {
                let data = self.data;
                let pcfg = |tag: &str| PretrainConfig { seed: derive_seed(self.seed, tag), ..self.cfg.pretrain.train.clone() };
                let (low, low_report) = pretrain_extractor(low, &data.pretrain_low, &data.pretrain_labels, 3, &pcfg("pretrain-low"))?;
                let (high, high_report) = pretrain_extractor(high, &data.pretrain_high, &data.pretrain_labels, 3, &pcfg("pretrain-high"))?;
                Extractors { low, high, reports: Some((low_report, high_report)) }
            } else {
                Extractors { low, high, reports: None }
            };
            self.extractors.insert(pretrain, ex);
        }
        Ok(&self.extractors[&pretrain])
    }

    fn all_slides(&self) -> impl Iterator<Item = &'a PreparedSlide> {
        let d = self.data;
        d.train.iter().chain(&d.val).chain(&d.test)
    }

    /// The binary screening model for the given toggles, trained on first use.
    pub fn stage1(&mut self, dropout: bool, pretrain: bool) -> Result<&Stage1> {
        let key = Stage1Key { dropout, pretrain };
        if !self.stage1.contains_key(&key) {
            let extractor = self.extractors(pretrain)?.low.clone();
            let rate = if dropout { self.cfg.train.dropout_rate } else { 0.0 };
            let (train, val) = (low_bags(&self.data.train, stage1_label), low_bags(&self.data.val, stage1_label));
            let fitted = self.fit_stage(&key.tag(), extractor, 2, (&train, &val), rate, low_mean_rgb(&self.data.train))?;
            let slides: Vec<&PreparedSlide> = self.all_slides().filter(|s| !s.is_empty()).collect();
            let outputs = crate::par::map(&slides, |s| Ok((s.slide_id.clone(), mil_forward(&s.low, &fitted.model)?)))?;
            self.stage1.insert(key, Stage1 { model: fitted.model, log: fitted.log, outputs: outputs.into_iter().collect() });
        }
        Ok(&self.stage1[&key])
    }

    pub fn train_variant(&mut self, variant: Variant) -> Result<TrainedVariant> {
        let spec = variant.spec();
        let (selection_cfg, reference, seed) = (self.cfg.selection.clone(), self.data.reference, self.seed);
        let assemble = move |stage1: MilModel, stage2: Option<MilModel>| TwoStageModel {
            variant,
            stage1,
            stage2,
            selection_method: spec.selection,
            selection: selection_cfg,
            reference,
            seed,
        };
        if !spec.two_stage {
            let extractor = self.extractors(spec.pretrain)?.low.clone();
            let label = |c: SlideClass| c.index();
            let (train, val) = (low_bags(&self.data.train, label), low_bags(&self.data.val, label));
            let rate = self.cfg.train.dropout_rate;
            let fitted = self.fit_stage("one-stage", extractor, 3, (&train, &val), rate, low_mean_rgb(&self.data.train))?;
            return Ok(TrainedVariant { model: assemble(fitted.model, None), logs: vec![("stage1".into(), fitted.log)] });
        }

        let method = spec.selection.ok_or_else(|| Error::InvalidArgument(format!("{variant} has no selection method")))?;
        let high_extractor = self.extractors(spec.pretrain)?.high.clone();
        let stage1 = self.stage1(spec.stage1_dropout, spec.pretrain)?.clone();
        let selection = &self.cfg.selection;
        let selected_bags = |slides: &[PreparedSlide]| -> Result<Vec<Bag>> {
            let mut bags = Vec::new();
            for s in slides.iter().filter(|s| !s.is_empty()) {
                let sel = select_tiles(method, s, &stage1.outputs[&s.slide_id], selection, seed)?;
                bags.push(s.high_bag(&sel.indices, s.class.index()));
            }
            Ok(bags)
        };
        let (train, val) = (selected_bags(&self.data.train)?, selected_bags(&self.data.val)?);
        let tag = format!("stage2/{variant}");
        let tiles: Vec<&RgbImage> = train.iter().flat_map(|b| &b.tiles).collect();
        let fill = mean_rgb(&tiles);
        let fitted = self.fit_stage(&tag, high_extractor, 3, (&train, &val), self.cfg.train.dropout_rate, fill)?;
        Ok(TrainedVariant {
            model: assemble(stage1.model, Some(fitted.model)),
            logs: vec![("stage1".into(), stage1.log), ("stage2".into(), fitted.log)],
        })
    }
}

fn low_bags(slides: &[PreparedSlide], label: impl Fn(SlideClass) -> usize) -> Vec<Bag> {
    slides.iter().filter(|s| !s.is_empty()).map(|s| s.low_bag(label(s.class))).collect()
}

fn low_mean_rgb(slides: &[PreparedSlide]) -> [u8; 3] {
    let tiles: Vec<&RgbImage> = slides.iter().flat_map(|s| &s.low).collect();
    mean_rgb(&tiles)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub seed: u64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn accuracies(&self, variant: Variant) -> Vec<f64> {
        self.rows.iter().filter(|r| r.variant == variant).map(|r| r.accuracy).collect()
    }

    pub fn mean(&self, variant: Variant) -> Option<f64> {
        let a = self.accuracies(variant);
        (!a.is_empty()).then(|| a.iter().sum::<f64>() / a.len() as f64)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "variant,seed,accuracy")?;
        for r in &self.rows {
            writeln!(out, "{},{},{:.6}", r.variant, r.seed, r.accuracy)?;
        }
        Ok(())
    }
}

/// Trains and evaluates every variant for every seed on shared splits.
/// `inspect` sees each seed's experiment after its variants are done, with
/// the test reports in variant order.
pub fn run_ablation_suite_with(
    data: &PreparedDataset,
    cfg: &ExperimentConfig,
    variants: &[Variant],
    seeds: &[u64],
    mut inspect: impl FnMut(&mut Experiment<'_>, &[(Variant, EvalReport)]) -> Result<()>,
) -> Result<AblationTable> {
    if seeds.len() < 3 {
        return Err(Error::InvalidArgument(format!("ablation needs at least 3 seeds, got {}", seeds.len())));
    }
    let mut table = AblationTable::default();
    for &seed in seeds {
        let mut exp = Experiment::new(data, cfg.clone(), seed)?;
        let mut reports = Vec::with_capacity(variants.len());
        for &variant in variants {
            let trained = exp.train_variant(variant)?;
            let report = evaluate(&trained.model, &data.test)?;
            table.rows.push(AblationRow { variant, seed, accuracy: report.accuracy });
            reports.push((variant, report));
        }
        inspect(&mut exp, &reports)?;
    }
    Ok(table)
}

pub fn run_ablation_suite(data: &PreparedDataset, cfg: &ExperimentConfig, variants: &[Variant], seeds: &[u64]) -> Result<AblationTable> {
    run_ablation_suite_with(data, cfg, variants, seeds, |_, _| Ok(()))
}
