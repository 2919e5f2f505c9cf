use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{ExtractorParams, Trainable};
use crate::error::{Error, Result};
use crate::imaging::RgbImage;
use crate::linalg::{argmax, axpy, log_sum_exp, softmax};
use crate::mil::{adam_step, AdamConfig, AdamState, ClassifierParams};
use crate::params::Parameters;
use crate::seed::rng_for;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_extractor: f64,
    pub lr_head: f64,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self { epochs: 12, batch_size: 16, lr_extractor: 1e-3, lr_head: 1e-3, adam: AdamConfig::default(), seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainReport {
    /// Mean cross-entropy over the whole set before the first update.
    pub initial_loss: f64,
    /// Running mean of mini-batch losses, one entry per epoch.
    pub epoch_losses: Vec<f64>,
    /// Mean cross-entropy over the whole set after the last update.
    pub final_loss: f64,
    pub train_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct Pretrained {
    pub extractor: ExtractorParams,
    /// Temporary linear head; callers normally discard it.
    pub head: ClassifierParams,
    pub report: PretrainReport,
}

fn full_pass(extractor: &ExtractorParams, head: &ClassifierParams, tiles: &[RgbImage], labels: &[usize]) -> Result<(f64, f64)> {
    let mut loss = 0.0;
    let mut correct = 0;
    for (t, &y) in tiles.iter().zip(labels) {
        let logits = head.logits(&extractor.forward(t)?)?;
        loss += log_sum_exp(&logits) - logits[y];
        correct += usize::from(argmax(&logits) == y);
    }
    let n = tiles.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Fraction of tiles whose argmax class matches the label.
pub fn tile_accuracy(extractor: &ExtractorParams, head: &ClassifierParams, tiles: &[RgbImage], labels: &[usize]) -> Result<f64> {
    Ok(full_pass(extractor, head, tiles, labels)?.1)
}

/// Supervised tile classification with a temporary dense head, mini-batch Adam.
pub fn pretrain_with_head(
    init: ExtractorParams,
    tiles: &[RgbImage],
    labels: &[usize],
    n_classes: usize,
    cfg: &PretrainConfig,
) -> Result<Pretrained> {
    if tiles.len() != labels.len() {
        return Err(Error::DimensionMismatch(format!("{} tiles, {} labels", tiles.len(), labels.len())));
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= n_classes) {
        return Err(Error::InvalidArgument(format!("label {y} for {n_classes} classes")));
    }
    let first = labels.first().ok_or(Error::DegenerateLabels)?;
    if n_classes < 2 || labels.iter().all(|y| y == first) {
        return Err(Error::DegenerateLabels);
    }
    let batch = cfg.batch_size.max(1);
    let mut extractor = init;
    let mut head = ClassifierParams::init(n_classes, extractor.feature_dim(), cfg.seed);
    let (initial_loss, _) = full_pass(&extractor, &head, tiles, labels)?;

    let mut ext_state = AdamState::new(&extractor);
    let mut head_state = AdamState::new(&head);
    let mut rng = rng_for(cfg.seed, "pretrain-shuffle");
    let mut order: Vec<usize> = (0..tiles.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(batch) {
            let mut g_ext = extractor.zeros_like();
            let mut g_head = ClassifierParams::zeros(n_classes, extractor.feature_dim());
            for &i in chunk {
                let acts = extractor.forward_cached(&tiles[i])?;
                let logits = head.logits(&acts.feature)?;
                let loss = log_sum_exp(&logits) - logits[labels[i]];
                if !loss.is_finite() {
                    return Err(Error::NumericalFailure);
                }
                total += loss;
                let mut d_s = softmax(&logits);
                d_s[labels[i]] -= 1.0;
                for (c, &g) in d_s.iter().enumerate() {
                    g_head.b_c[c] += g;
                    axpy(g, &acts.feature, g_head.w_c.row_mut(c));
                }
                let d_feat = head.w_c.matvec_t(&d_s);
                extractor.backward(&acts, &d_feat, &mut g_ext, Trainable::All);
            }
            let scale = 1.0 / chunk.len() as f64;
            g_ext.scale(scale);
            g_head.scale(scale);
            adam_step(&mut extractor, &g_ext, &mut ext_state, cfg.lr_extractor, &cfg.adam);
            adam_step(&mut head, &g_head, &mut head_state, cfg.lr_head, &cfg.adam);
        }
        epoch_losses.push(total / tiles.len() as f64);
    }
    let (final_loss, train_accuracy) = full_pass(&extractor, &head, tiles, labels)?;
    Ok(Pretrained { extractor, head, report: PretrainReport { initial_loss, epoch_losses, final_loss, train_accuracy } })
}

/// Pretrains the extractor and drops the temporary head.
pub fn pretrain_extractor(
    init: ExtractorParams,
    tiles: &[RgbImage],
    labels: &[usize],
    n_classes: usize,
    cfg: &PretrainConfig,
) -> Result<(ExtractorParams, PretrainReport)> {
    let p = pretrain_with_head(init, tiles, labels, n_classes, cfg)?;
    Ok((p.extractor, p.report))
}
