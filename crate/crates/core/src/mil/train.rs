use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::dropout::dropout_mask;
use super::model::{head_forward, head_loss_and_grads, loss_and_grads, Bag, MilModel};
use crate::error::{Error, Result};
use crate::features::{extract_features, InstanceFeatures, Trainable};
use crate::imaging::RgbImage;
use crate::seed::rng_for;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr_head: f64,
    pub lr_extractor: f64,
    pub epochs: usize,
    /// Leading epochs that train the head only, with the extractor fixed.
    pub warmup_epochs: usize,
    /// Unfreeze blocks 2–3, the 1×1 reduction and the embedding after warm-up.
    /// `false` keeps the extractor fixed for every epoch.
    pub fine_tune_extractor: bool,
    pub dropout_rate: f64,
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    /// Minimum absolute drop in validation loss that counts as improvement.
    pub plateau_threshold: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr_head: 3e-3,
            lr_extractor: 3e-4,
            epochs: 20,
            warmup_epochs: 5,
            fine_tune_extractor: true,
            dropout_rate: 0.5,
            plateau_patience: 5,
            plateau_factor: 0.1,
            plateau_threshold: 1e-4,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_head > 0.0) || !(self.lr_extractor > 0.0) {
            return Err(Error::InvalidArgument("learning rates must be positive".into()));
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return Err(Error::InvalidArgument("plateau factor must lie in (0, 1)".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidArgument("dropout rate must lie in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { beta1: self.adam_beta1, beta2: self.adam_beta2, eps: self.adam_eps }
    }
}

/// Reduce-on-plateau: after `patience` consecutive epochs without an
/// improvement larger than `threshold`, the rate is multiplied by `factor`.
#[derive(Debug, Clone)]
pub struct PlateauScheduler {
    patience: usize,
    factor: f64,
    threshold: f64,
    best: f64,
    bad_epochs: usize,
}

impl PlateauScheduler {
    pub fn new(patience: usize, factor: f64, threshold: f64) -> Self {
        Self { patience, factor, threshold, best: f64::INFINITY, bad_epochs: 0 }
    }

    /// Records one validation loss; returns the multiplier to apply to the
    /// learning rates (1 or `factor`).
    pub fn step(&mut self, val_loss: f64) -> f64 {
        if val_loss < self.best - self.threshold {
            self.best = val_loss;
            self.bad_epochs = 0;
            return 1.0;
        }
        self.bad_epochs += 1;
        if self.bad_epochs >= self.patience {
            self.bad_epochs = 0;
            return self.factor;
        }
        1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    pub lr_head: f64,
    pub lr_extractor: f64,
}

pub const EPOCH_LOG_HEADER: &str = "epoch,train_loss,val_loss,val_acc,lr_head,lr_extractor";

impl EpochLog {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.6},{:.6},{:.6},{:e},{:e}",
            self.epoch, self.train_loss, self.val_loss, self.val_acc, self.lr_head, self.lr_extractor
        )
    }
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub model: MilModel,
    pub log: Vec<EpochLog>,
    /// Epoch (1-based) of the returned checkpoint; `None` when no epoch ran.
    pub best_epoch: Option<usize>,
}

fn features_for(bags: &[Bag], model: &MilModel) -> Result<Vec<InstanceFeatures>> {
    bags.iter().map(|b| extract_features(&b.tiles, &model.extractor)).collect()
}

/// Mean cross-entropy and accuracy without dropout.
pub fn evaluate_bags(features: &[InstanceFeatures], bags: &[Bag], model: &MilModel) -> Result<(f64, f64)> {
    let mut loss = 0.0;
    let mut correct = 0usize;
    for (v, bag) in features.iter().zip(bags) {
        let (probs, _) = head_forward(v, &model.attention, &model.classifier)?;
        loss -= probs[bag.label].max(f64::MIN_POSITIVE).ln();
        if crate::linalg::argmax(&probs) == bag.label {
            correct += 1;
        }
    }
    let n = bags.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Trains one MIL stage with single-bag Adam steps and returns the
/// checkpoint with the best validation accuracy (earliest on ties).
pub fn fit(init: MilModel, train: &[Bag], val: &[Bag], cfg: &TrainConfig, mean_rgb: [u8; 3]) -> Result<FitOutcome> {
    if train.is_empty() {
        return Err(Error::EmptySplit("train".into()));
    }
    if val.is_empty() {
        return Err(Error::EmptySplit("validation".into()));
    }
    cfg.validate()?;
    let n = init.num_classes();
    if let Some(b) = train.iter().chain(val).find(|b| b.label >= n || b.is_empty()) {
        return Err(Error::InvalidArgument(format!("bag {} is empty or has label {} for {n} classes", b.slide_id, b.label)));
    }

    let adam = cfg.adam();
    let mut model = init.clone();
    let mut best = (init, None, f64::NEG_INFINITY);
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut head_state = (AdamState::new(&model.attention), AdamState::new(&model.classifier));
    let mut extractor_state = AdamState::new(&model.extractor);
    let (mut lr_head, mut lr_extractor) = (cfg.lr_head, cfg.lr_extractor);
    let mut plateau = PlateauScheduler::new(cfg.plateau_patience, cfg.plateau_factor, cfg.plateau_threshold);
    let mut shuffle_rng = rng_for(cfg.seed, "fit-shuffle");
    let mut dropout_rng = rng_for(cfg.seed, "fit-dropout");
    let side = model.extractor.input_side();
    let blank = RgbImage::filled(side, side, mean_rgb)?;

    let mut cache: Option<(Vec<InstanceFeatures>, Vec<InstanceFeatures>, Vec<f64>)> = None;
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 0..cfg.epochs {
        let frozen = !cfg.fine_tune_extractor || epoch < cfg.warmup_epochs;
        if !frozen {
            cache = None;
        } else if cache.is_none() {
            cache = Some((features_for(train, &model)?, features_for(val, &model)?, model.extractor.forward(&blank)?));
        }
        order.shuffle(&mut shuffle_rng);
        let mut train_loss = 0.0;
        for &bi in &order {
            let bag = &train[bi];
            let dropped = if cfg.dropout_rate > 0.0 {
                dropout_mask(bag.len(), cfg.dropout_rate, &mut dropout_rng)
            } else {
                vec![false; bag.len()]
            };
            let (loss, attention, classifier, extractor) = if let Some((train_feats, _, blank_feat)) = &cache {
                let mut v = train_feats[bi].clone();
                for (i, &d) in dropped.iter().enumerate() {
                    if d {
                        v.row_mut(i).copy_from_slice(blank_feat);
                    }
                }
                let (loss, head, _) = head_loss_and_grads(&v, bag.label, &model.attention, &model.classifier)?;
                (loss, head.attention, head.classifier, None)
            } else {
                let tiles: Vec<RgbImage> =
                    bag.tiles.iter().zip(&dropped).map(|(t, &d)| if d { blank.clone() } else { t.clone() }).collect();
                let (loss, g) = loss_and_grads(&tiles, bag.label, &model, Trainable::Upper)?;
                (loss, g.attention, g.classifier, Some(g.extractor))
            };
            train_loss += loss;
            adam_step(&mut model.attention, &attention, &mut head_state.0, lr_head, &adam);
            adam_step(&mut model.classifier, &classifier, &mut head_state.1, lr_head, &adam);
            if let Some(g) = extractor {
                adam_step(&mut model.extractor, &g, &mut extractor_state, lr_extractor, &adam);
            }
        }
        train_loss /= train.len() as f64;
        let (val_loss, val_acc) = match &cache {
            Some((_, val_feats, _)) => evaluate_bags(val_feats, val, &model)?,
            None => evaluate_bags(&features_for(val, &model)?, val, &model)?,
        };
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(Error::NumericalFailure);
        }
        log.push(EpochLog { epoch: epoch + 1, train_loss, val_loss, val_acc, lr_head, lr_extractor });
        if val_acc > best.2 {
            best = (model.clone(), Some(epoch + 1), val_acc);
        }
        let factor = plateau.step(val_loss);
        lr_head *= factor;
        lr_extractor *= factor;
    }
    Ok(FitOutcome { model: best.0, log, best_epoch: best.1 })
}

/// Runs the frozen warm-up from every candidate initialisation and returns
/// the index with the lowest final validation loss (earliest on ties).
pub fn pick_initialization(
    candidates: &[MilModel],
    train: &[Bag],
    val: &[Bag],
    cfg: &TrainConfig,
    mean_rgb: [u8; 3],
) -> Result<usize> {
    if candidates.is_empty() {
        return Err(Error::EmptyInput);
    }
    if candidates.len() == 1 {
        return Ok(0);
    }
    let probe = TrainConfig { epochs: cfg.warmup_epochs.max(1), fine_tune_extractor: false, ..cfg.clone() };
    let losses = crate::par::map(candidates, |init| {
        let out = fit(init.clone(), train, val, &probe, mean_rgb)?;
        Ok(out.log.last().map_or(f64::INFINITY, |e| e.val_loss))
    })?;
    let mut best = 0;
    for (i, &l) in losses.iter().enumerate() {
        if l < losses[best] {
            best = i;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plateau_drops_once_after_patience() {
        let patience = 4;
        let mut s = PlateauScheduler::new(patience, 0.1, 1e-4);
        let factors: Vec<f64> = (0..=patience).map(|_| s.step(0.7)).collect();
        assert_eq!(factors.iter().filter(|&&f| f == 0.1).count(), 1);
        assert_eq!(*factors.last().unwrap(), 0.1);
    }

    #[test]
    fn improvements_reset_patience() {
        let mut s = PlateauScheduler::new(2, 0.1, 1e-4);
        assert_eq!(s.step(1.0), 1.0);
        assert_eq!(s.step(1.0), 1.0);
        assert_eq!(s.step(0.9), 1.0);
        assert_eq!(s.step(0.89995), 1.0);
        assert_eq!(s.step(0.9), 0.1);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { plateau_factor: 1.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { lr_head: 0.0, ..Default::default() }.validate().is_err());
    }
}
