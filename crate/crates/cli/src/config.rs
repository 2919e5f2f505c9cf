use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use tsmil::pipeline::{ExperimentConfig, Variant};
use tsmil::synth::DatasetConfig;

use crate::CliError;

/// Fully resolved settings for one run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Root seed; every RNG in the run is derived from it by purpose tag.
    pub seed: u64,
    pub dataset_dir: PathBuf,
    pub run_dir: PathBuf,
    pub variant: Variant,
    pub ablation_seeds: Vec<u64>,
    pub dataset: DatasetConfig,
    pub experiment: ExperimentConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            dataset_dir: PathBuf::from("data"),
            run_dir: PathBuf::from("runs/default"),
            variant: Variant::AttClusterTwoStage,
            ablation_seeds: vec![0, 1, 2, 3, 4],
            dataset: DatasetConfig::default(),
            experiment: ExperimentConfig::default(),
        }
    }
}

/// Flags shared by every subcommand. Each mirrors a config key.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// JSON config file; its values override the built-in defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub dataset_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub run_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub variant: Option<Variant>,
    /// Comma-separated seeds for `ablate`.
    #[arg(long, global = true, value_delimiter = ',')]
    pub ablation_seeds: Option<Vec<u64>>,

    #[arg(long, global = true)]
    pub n_per_class: Option<usize>,
    #[arg(long, global = true)]
    pub patients_per_class: Option<usize>,
    #[arg(long, global = true)]
    pub slide_size: Option<usize>,

    #[arg(long, global = true)]
    pub tile_size: Option<usize>,
    #[arg(long, global = true)]
    pub overlap: Option<f64>,
    #[arg(long, global = true)]
    pub min_tissue: Option<f64>,
    #[arg(long, global = true)]
    pub hue_lo: Option<f64>,
    #[arg(long, global = true)]
    pub hue_hi: Option<f64>,
    #[arg(long, global = true)]
    pub morph_radius: Option<usize>,

    #[arg(long, global = true)]
    pub budget: Option<usize>,
    #[arg(long, global = true)]
    pub pca_dim: Option<usize>,
    #[arg(long, global = true)]
    pub clusters: Option<usize>,

    #[arg(long, global = true)]
    pub hidden: Option<usize>,
    #[arg(long, global = true)]
    pub init_candidates: Option<usize>,
    #[arg(long, global = true)]
    pub lr_head: Option<f64>,
    #[arg(long, global = true)]
    pub lr_extractor: Option<f64>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    #[arg(long, global = true)]
    pub warmup_epochs: Option<usize>,
    #[arg(long, global = true)]
    pub dropout_rate: Option<f64>,
    #[arg(long, global = true)]
    pub plateau_patience: Option<usize>,
    #[arg(long, global = true)]
    pub plateau_factor: Option<f64>,
    #[arg(long, global = true)]
    pub pretrain_slides: Option<usize>,
    #[arg(long, global = true)]
    pub pretrain_epochs: Option<usize>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }

    /// Defaults, then the config file, then flags.
    pub fn resolve(o: &Overrides) -> Result<Self, CliError> {
        let mut cfg = match &o.config {
            Some(path) => Self::from_file(path)?,
            None => Self::default(),
        };
        cfg.apply(o.clone());
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: Overrides) {
        set(&mut self.seed, o.seed);
        set(&mut self.dataset_dir, o.dataset_dir);
        set(&mut self.run_dir, o.run_dir);
        set(&mut self.variant, o.variant);
        set(&mut self.ablation_seeds, o.ablation_seeds);

        let d = &mut self.dataset;
        set(&mut d.n_per_class, o.n_per_class);
        set(&mut d.patients_per_class, o.patients_per_class);
        set(&mut d.slide_size, o.slide_size);

        let e = &mut self.experiment;
        set(&mut e.preprocess.tile_size, o.tile_size);
        set(&mut e.preprocess.overlap, o.overlap);
        set(&mut e.preprocess.min_tissue, o.min_tissue);
        set(&mut e.preprocess.hue_lo, o.hue_lo);
        set(&mut e.preprocess.hue_hi, o.hue_hi);
        set(&mut e.preprocess.morph_radius, o.morph_radius);
        set(&mut e.selection.budget, o.budget);
        set(&mut e.selection.pca_dim, o.pca_dim);
        set(&mut e.selection.clusters, o.clusters);
        set(&mut e.model.hidden, o.hidden);
        set(&mut e.model.init_candidates, o.init_candidates);
        set(&mut e.train.lr_head, o.lr_head);
        set(&mut e.train.lr_extractor, o.lr_extractor);
        set(&mut e.train.epochs, o.epochs);
        set(&mut e.train.warmup_epochs, o.warmup_epochs);
        set(&mut e.train.dropout_rate, o.dropout_rate);
        set(&mut e.train.plateau_patience, o.plateau_patience);
        set(&mut e.train.plateau_factor, o.plateau_factor);
        set(&mut e.pretrain.slides_per_class, o.pretrain_slides);
        set(&mut e.pretrain.train.epochs, o.pretrain_epochs);

        // The ground-truth grid has to match the tiling used downstream.
        self.dataset.tile_size = e.preprocess.tile_size;
        self.dataset.overlap = e.preprocess.overlap;
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let usage = |e: tsmil::Error| CliError::Usage(e.to_string());
        self.dataset.validate().map_err(usage)?;
        self.experiment.preprocess.validate().map_err(usage)?;
        self.experiment.train.validate().map_err(usage)?;
        let s = &self.experiment.selection;
        if s.budget == 0 || s.clusters == 0 || s.pca_dim == 0 {
            return Err(CliError::Usage("selection budget, clusters and pca-dim must be positive".into()));
        }
        if self.experiment.model.hidden == 0 || self.experiment.model.feature_dim == 0 {
            return Err(CliError::Usage("model widths must be positive".into()));
        }
        if self.experiment.train.epochs == 0 {
            return Err(CliError::Usage("epochs must be positive".into()));
        }
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).map_err(tsmil::Error::from)?;
        fs::write(path, text + "\n").map_err(tsmil::Error::from)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        fs::write(&path, r#"{"seed": 7, "experiment": {"train": {"epochs": 3, "lr_head": 0.5}}}"#).unwrap();
        let o = Overrides { config: Some(path), epochs: Some(9), ..Default::default() };
        let cfg = RunConfig::resolve(&o).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.experiment.train.epochs, 9);
        assert_eq!(cfg.experiment.train.lr_head, 0.5);
        assert_eq!(cfg.experiment.train.lr_extractor, ExperimentConfig::default().train.lr_extractor);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        fs::write(&path, r#"{"sede": 7}"#).unwrap();
        let o = Overrides { config: Some(path), ..Default::default() };
        assert!(matches!(RunConfig::resolve(&o), Err(CliError::Usage(_))));
    }

    #[test]
    fn round_trips_through_json() {
        let cfg = RunConfig { seed: 11, variant: Variant::OneStage, ..Default::default() };
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
}
