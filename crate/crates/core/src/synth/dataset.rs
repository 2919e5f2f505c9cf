use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{generate_slide, GroundTruth, SlideClass, SyntheticSlideSpec, TextureParams};
use crate::error::{Error, Result};
use crate::imaging::RgbImage;
use crate::seed::{derive_seed, rng_for};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub n_per_class: usize,
    pub patients_per_class: usize,
    pub slide_size: usize,
    pub tile_size: usize,
    pub overlap: f64,
    /// Train/val/test proportions by patient.
    pub split: [f64; 3],
    pub pen_fraction: f64,
    pub lesion_fraction: (f64, f64),
    pub background_fraction: (f64, f64),
    /// Half-width of the per-patient stain gain; slides add a third of it.
    pub stain_jitter: f64,
    pub texture: TextureParams,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            n_per_class: 40,
            patients_per_class: 10,
            slide_size: 256,
            tile_size: 32,
            overlap: 0.125,
            split: [0.6, 0.2, 0.2],
            pen_fraction: 0.25,
            lesion_fraction: (0.15, 0.45),
            background_fraction: (0.3, 0.45),
            stain_jitter: 0.06,
            texture: TextureParams::default(),
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.n_per_class == 0 {
            return bad("n_per_class must be at least 1".into());
        }
        if self.patients_per_class < 3 {
            return bad(format!("patients_per_class is {}, need at least 3", self.patients_per_class));
        }
        if self.patients_per_class > self.n_per_class {
            return bad(format!("{} patients cannot share {} slides", self.patients_per_class, self.n_per_class));
        }
        if self.split.iter().any(|&s| s <= 0.0) {
            return bad(format!("split proportions {:?} must be positive", self.split));
        }
        let (lo, hi) = self.lesion_fraction;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return bad(format!("lesion fraction range {:?} must lie in (0, 1]", self.lesion_fraction));
        }
        let (lo, hi) = self.background_fraction;
        if !(0.0 <= lo && lo <= hi && hi < 0.95) {
            return bad(format!("background fraction range {:?} must lie in [0, 0.95)", self.background_fraction));
        }
        if !(0.0..=1.0).contains(&self.pen_fraction) || !(0.0..0.5).contains(&self.stain_jitter) {
            return bad("pen_fraction must be in [0, 1] and stain_jitter in [0, 0.5)".into());
        }
        Ok(())
    }
}

/// One manifest line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub slide_id: String,
    /// Slide PNG, relative to the dataset directory.
    pub path: String,
    pub class: SlideClass,
    pub patient: String,
    pub seed: u64,
    pub split: Split,
    /// Ground-truth CSV, relative to the dataset directory.
    pub truth: String,
}

/// Patient counts per split for `n` patients: rounded proportions, each split
/// keeping at least one patient.
fn split_counts(n: usize, props: [f64; 3]) -> [usize; 3] {
    let total: f64 = props.iter().sum();
    let mut val = ((n as f64 * props[1] / total).round() as usize).max(1);
    let mut test = ((n as f64 * props[2] / total).round() as usize).max(1);
    while val + test > n - 1 {
        if val >= test {
            val -= 1;
        } else {
            test -= 1;
        }
    }
    [n - val - test, val, test]
}

fn gain(rng: &mut impl Rng, base: [f64; 3], half_width: f64) -> [f64; 3] {
    base.map(|g| if half_width > 0.0 { g * (1.0 + rng.random_range(-half_width..=half_width)) } else { g })
}

fn sample_spec(cfg: &DatasetConfig, slide_id: String, class: SlideClass, patient: String, patient_gain: [f64; 3], seed: u64) -> SyntheticSlideSpec {
    let mut rng = rng_for(seed, "slide-spec");
    let lesion_fraction = if class.is_cancer() {
        rng.random_range(cfg.lesion_fraction.0..=cfg.lesion_fraction.1)
    } else {
        0.0
    };
    let background_fraction = rng.random_range(cfg.background_fraction.0..=cfg.background_fraction.1);
    let pen_marker = rng.random::<f64>() < cfg.pen_fraction;
    let texture = TextureParams { stain_gain: gain(&mut rng, patient_gain, cfg.stain_jitter / 3.0), ..cfg.texture.clone() };
    SyntheticSlideSpec {
        slide_id,
        slide_size: cfg.slide_size,
        tile_size: cfg.tile_size,
        overlap: cfg.overlap,
        class,
        lesion_fraction,
        texture,
        background_fraction,
        pen_marker,
        patient_id: patient,
        seed,
    }
}

/// Slide specs and manifest entries for a dataset, without rendering.
/// Patients are split per class so every split holds every class.
pub fn dataset_specs(cfg: &DatasetConfig, seed: u64) -> Result<Vec<(ManifestEntry, SyntheticSlideSpec)>> {
    cfg.validate()?;
    let mut out = Vec::with_capacity(3 * cfg.n_per_class);
    let counts = split_counts(cfg.patients_per_class, cfg.split);
    for class in SlideClass::ALL {
        let mut patients: Vec<usize> = (0..cfg.patients_per_class).collect();
        patients.shuffle(&mut rng_for(seed, &format!("split-{class}")));
        let split_of = |p: usize| {
            let pos = patients.iter().position(|&q| q == p).unwrap_or(0);
            if pos < counts[0] {
                Split::Train
            } else if pos < counts[0] + counts[1] {
                Split::Val
            } else {
                Split::Test
            }
        };
        for s in 0..cfg.n_per_class {
            let p = s % cfg.patients_per_class;
            let patient = format!("{class}-p{p:03}");
            let patient_gain = gain(&mut rng_for(seed, &format!("patient-{patient}")), [1.0; 3], cfg.stain_jitter);
            let slide_id = format!("{class}-{s:03}");
            let slide_seed = derive_seed(seed, &format!("slide-{slide_id}"));
            let spec = sample_spec(cfg, slide_id.clone(), class, patient.clone(), patient_gain, slide_seed);
            let entry = ManifestEntry {
                path: format!("slides/{slide_id}.png"),
                truth: format!("truth/{slide_id}.csv"),
                slide_id,
                class,
                patient,
                seed: slide_seed,
                split: split_of(p),
            };
            out.push((entry, spec));
        }
    }
    Ok(out)
}

/// Extra slides for the instance-labelled tile set, from patients disjoint
/// from any dataset split.
pub fn pretraining_specs(cfg: &DatasetConfig, slides_per_class: usize, seed: u64) -> Result<Vec<SyntheticSlideSpec>> {
    cfg.validate()?;
    let mut out = Vec::new();
    for class in SlideClass::ALL {
        for s in 0..slides_per_class {
            let slide_id = format!("pretrain-{class}-{s:03}");
            let patient_gain = gain(&mut rng_for(seed, &format!("pretrain-patient-{slide_id}")), [1.0; 3], cfg.stain_jitter);
            let slide_seed = derive_seed(seed, &format!("pretrain-slide-{slide_id}"));
            out.push(sample_spec(cfg, slide_id.clone(), class, slide_id, patient_gain, slide_seed));
        }
    }
    Ok(out)
}

pub fn write_manifest(path: impl AsRef<Path>, entries: &[ManifestEntry]) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for e in entries {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut entries = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            entries.push(serde_json::from_str(&line)?);
        }
    }
    Ok(entries)
}

/// Renders every slide and writes `slides/`, `truth/` and `manifest.jsonl`
/// under `dir`.
pub fn generate_dataset(cfg: &DatasetConfig, seed: u64, dir: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir.join("slides"))?;
    fs::create_dir_all(dir.join("truth"))?;
    let specs = dataset_specs(cfg, seed)?;
    for (entry, spec) in &specs {
        let (image, truth) = generate_slide(spec)?;
        image.save_png(dir.join(&entry.path))?;
        truth.write_csv(BufWriter::new(fs::File::create(dir.join(&entry.truth))?))?;
    }
    let entries: Vec<ManifestEntry> = specs.into_iter().map(|(e, _)| e).collect();
    write_manifest(dir.join("manifest.jsonl"), &entries)?;
    Ok(entries)
}

/// A slide loaded back from a dataset directory.
pub fn load_slide(dir: impl AsRef<Path>, entry: &ManifestEntry, tile_size: usize) -> Result<(RgbImage, GroundTruth)> {
    let dir: PathBuf = dir.as_ref().into();
    let image = RgbImage::load_png(dir.join(&entry.path))?;
    let truth = GroundTruth::read_csv(BufReader::new(fs::File::open(dir.join(&entry.truth))?), tile_size)?;
    Ok((image, truth))
}
