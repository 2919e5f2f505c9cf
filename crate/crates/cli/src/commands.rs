use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tsmil::imaging::{ColorStats, RgbImage};
use tsmil::mil::{EpochLog, EPOCH_LOG_HEADER};
use tsmil::pipeline::{
    evaluate, extract_tissue_tiles, normalize_slide, predict, prepare_dataset, raw_from_dir, raw_from_specs, reference_stats,
    run_ablation_suite, Experiment, PreparedDataset, RawSlide, TwoStageModel, Variant, META_FILE,
};
use tsmil::synth::{generate_dataset, load_slide, pretraining_specs, read_manifest, DatasetConfig, ManifestEntry, Split};

use crate::config::RunConfig;
use crate::{overlay, CliError};

pub const DATASET_INFO: &str = "dataset.json";
pub const MANIFEST: &str = "manifest.jsonl";

/// How a dataset directory was produced; pretraining slides are regenerated
/// from it rather than stored.
#[derive(Debug, Serialize, Deserialize)]
struct DatasetInfo {
    seed: u64,
    config: DatasetConfig,
}

pub struct RunLayout {
    pub root: PathBuf,
}

impl RunLayout {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        for sub in ["checkpoints", "logs", "reports", "overlays"] {
            fs::create_dir_all(root.join(sub)).map_err(tsmil::Error::from)?;
        }
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.json")
    }

    pub fn checkpoint(&self, variant: Variant) -> PathBuf {
        self.root.join("checkpoints").join(variant.name())
    }

    pub fn log(&self, variant: Variant, stage: &str) -> PathBuf {
        self.root.join("logs").join(format!("{variant}-{stage}.csv"))
    }

    pub fn report(&self, name: &str) -> PathBuf {
        self.root.join("reports").join(name)
    }

    pub fn overlay(&self, name: &str) -> PathBuf {
        self.root.join("overlays").join(name)
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(path).map_err(tsmil::Error::from)?))
}

fn manifest(cfg: &RunConfig) -> Result<Vec<ManifestEntry>, CliError> {
    let path = cfg.dataset_dir.join(MANIFEST);
    if !path.is_file() {
        return Err(CliError::Usage(format!("no dataset manifest at {}; run `tsmil generate` first", path.display())));
    }
    Ok(read_manifest(path)?)
}

fn dataset_info(cfg: &RunConfig) -> Result<DatasetInfo, CliError> {
    let path = cfg.dataset_dir.join(DATASET_INFO);
    let text = fs::read_to_string(&path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("invalid {}: {e}", path.display())))
}

fn load_prepared(cfg: &RunConfig) -> Result<PreparedDataset, CliError> {
    let entries = manifest(cfg)?;
    let info = dataset_info(cfg)?;
    let e = &cfg.experiment;
    let slides = raw_from_dir(&cfg.dataset_dir, &entries, &e.preprocess)?;
    let pretrain = raw_from_specs(&pretraining_specs(&info.config, e.pretrain.slides_per_class, info.seed)?, &e.preprocess)?;
    Ok(prepare_dataset(slides, pretrain, &e.pretrain, cfg.seed)?)
}

fn write_log(path: &Path, log: &[EpochLog]) -> Result<(), CliError> {
    let mut out = create(path)?;
    writeln!(out, "{EPOCH_LOG_HEADER}").map_err(tsmil::Error::from)?;
    for e in log {
        writeln!(out, "{}", e.csv_row()).map_err(tsmil::Error::from)?;
    }
    out.flush().map_err(tsmil::Error::from)?;
    Ok(())
}

pub fn generate(cfg: &RunConfig) -> Result<(), CliError> {
    let entries = generate_dataset(&cfg.dataset, cfg.seed, &cfg.dataset_dir)?;
    let info = DatasetInfo { seed: cfg.seed, config: cfg.dataset.clone() };
    let text = serde_json::to_string_pretty(&info).map_err(tsmil::Error::from)?;
    fs::write(cfg.dataset_dir.join(DATASET_INFO), text + "\n").map_err(tsmil::Error::from)?;
    println!("wrote {} slides to {}", entries.len(), cfg.dataset_dir.display());
    Ok(())
}

/// Tissue-tile counts per slide and the colour reference of the training split.
pub fn preprocess(cfg: &RunConfig) -> Result<(), CliError> {
    let layout = RunLayout::create(&cfg.run_dir)?;
    let entries = manifest(cfg)?;
    let slides = raw_from_dir(&cfg.dataset_dir, &entries, &cfg.experiment.preprocess)?;
    let mut out = create(&layout.report("tiles.csv"))?;
    writeln!(out, "slide_id,split,class,tiles,lesion_tiles").map_err(tsmil::Error::from)?;
    for (raw, split) in &slides {
        let lesion = raw.truth.as_ref().map_or(0, |t| {
            raw.tile_refs.iter().filter(|r| t.label_at(r.x, r.y).is_some_and(|l| l.is_lesion())).count()
        });
        let split = serde_json::to_value(split).map_err(tsmil::Error::from)?;
        let split = split.as_str().unwrap_or_default();
        writeln!(out, "{},{split},{},{},{lesion}", raw.slide_id, raw.class, raw.tiles.len()).map_err(tsmil::Error::from)?;
    }
    out.flush().map_err(tsmil::Error::from)?;
    let train: Vec<RawSlide> = slides.into_iter().filter(|(_, s)| *s == Split::Train).map(|(r, _)| r).collect();
    let reference = reference_stats(&train)?;
    let text = serde_json::to_string_pretty(&reference).map_err(tsmil::Error::from)?;
    fs::write(layout.report("reference.json"), text + "\n").map_err(tsmil::Error::from)?;
    println!("preprocessed {} slides into {}", entries.len(), layout.root.display());
    Ok(())
}

pub fn train(cfg: &RunConfig, force: bool) -> Result<(), CliError> {
    let layout = RunLayout::create(&cfg.run_dir)?;
    let variant = cfg.variant;
    let ckpt = layout.checkpoint(variant);
    if ckpt.join(META_FILE).is_file() && !force {
        return Err(CliError::Usage(format!("{} is already trained in {}; pass --force to retrain", variant, layout.root.display())));
    }
    cfg.write(&layout.config())?;
    let data = load_prepared(cfg)?;
    let mut exp = Experiment::new(&data, cfg.experiment.clone(), cfg.seed)?;
    let trained = exp.train_variant(variant)?;
    trained.model.save(&ckpt)?;
    for (stage, log) in &trained.logs {
        write_log(&layout.log(variant, stage), log)?;
    }
    let summary: Vec<String> = trained
        .logs
        .iter()
        .map(|(stage, log)| format!("{stage} best val acc {:.3}", log.iter().map(|e| e.val_acc).fold(0.0, f64::max)))
        .collect();
    println!("trained {variant}: {}", summary.join(", "));
    Ok(())
}

fn load_model(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<TwoStageModel, CliError> {
    let dir = match checkpoint {
        Some(p) => p.to_path_buf(),
        None => cfg.run_dir.join("checkpoints").join(cfg.variant.name()),
    };
    if !dir.join(META_FILE).is_file() {
        return Err(CliError::Usage(format!("no checkpoint at {}; run `tsmil train` first", dir.display())));
    }
    Ok(TwoStageModel::load(&dir)?)
}

fn normalized(raw: RawSlide, reference: &ColorStats) -> Result<tsmil::pipeline::PreparedSlide, CliError> {
    Ok(normalize_slide(raw, reference)?)
}

pub fn eval(cfg: &RunConfig, checkpoint: Option<&Path>, split: Split) -> Result<(), CliError> {
    let layout = RunLayout::create(&cfg.run_dir)?;
    let model = load_model(cfg, checkpoint)?;
    let entries: Vec<ManifestEntry> = manifest(cfg)?.into_iter().filter(|e| e.split == split).collect();
    let slides = raw_from_dir(&cfg.dataset_dir, &entries, &cfg.experiment.preprocess)?
        .into_iter()
        .map(|(raw, _)| normalized(raw, &model.reference))
        .collect::<Result<Vec<_>, _>>()?;
    let report = evaluate(&model, &slides)?;
    let split_name = serde_json::to_value(split).map_err(tsmil::Error::from)?;
    let stem = format!("{}-{}", model.variant, split_name.as_str().unwrap_or_default());
    report.write_json(create(&layout.report(&format!("{stem}-eval.json")))?)?;
    report.write_confusion_csv(create(&layout.report(&format!("{stem}-confusion.csv")))?)?;
    println!("{stem}: accuracy {:.4} over {} slides", report.accuracy, slides.len());
    Ok(())
}

pub fn ablate(cfg: &RunConfig) -> Result<(), CliError> {
    if cfg.ablation_seeds.len() < 3 {
        return Err(CliError::Usage("ablation needs at least three seeds".into()));
    }
    let layout = RunLayout::create(&cfg.run_dir)?;
    cfg.write(&layout.config())?;
    let data = load_prepared(cfg)?;
    let table = run_ablation_suite(&data, &cfg.experiment, &Variant::ALL, &cfg.ablation_seeds)?;
    table.write_csv(create(&layout.report("ablation.csv"))?)?;
    for v in Variant::ALL {
        if let Some(m) = table.mean(v) {
            println!("{v:<22} mean accuracy {m:.4}");
        }
    }
    Ok(())
}

pub fn visualize(cfg: &RunConfig, slide_id: &str, checkpoint: Option<&Path>, out: Option<&Path>) -> Result<PathBuf, CliError> {
    let layout = RunLayout::create(&cfg.run_dir)?;
    let model = load_model(cfg, checkpoint)?;
    let entry = manifest(cfg)?
        .into_iter()
        .find(|e| e.slide_id == slide_id)
        .ok_or_else(|| CliError::Usage(format!("slide {slide_id} is not in the dataset manifest")))?;
    let pre = &cfg.experiment.preprocess;
    let (image, _) = load_slide(&cfg.dataset_dir, &entry, pre.tile_size)?;
    let raw = extract_tissue_tiles(&entry.slide_id, entry.class, &image, pre)?;
    let slide = normalized(raw, &model.reference)?;
    let prediction = predict(&model, &slide)?;
    let picture: RgbImage =
        overlay::render(&image, &slide.tile_refs, &prediction.alpha.weights, &prediction.selection.selected, pre.tile_size);
    let stem = format!("{slide_id}-{}", model.variant);
    let path = out.map_or_else(|| layout.overlay(&format!("{stem}.png")), Path::to_path_buf);
    picture.save_png(&path)?;
    prediction.selection.write_csv(&slide.tile_refs, create(&path.with_extension("csv"))?)?;
    println!("{slide_id}: predicted {} (truth {}), overlay at {}", prediction.class, entry.class, path.display());
    Ok(path)
}
