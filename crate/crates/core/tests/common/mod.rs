//! Shared test oracles. Everything here is deliberately independent of the
//! code paths under test (no analytic gradients, no library k-means, ...).

#![allow(dead_code)]

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tsmil::features::{ExtractorParams, Trainable};
use tsmil::imaging::{ColorStats, RgbImage};
use tsmil::linalg::{sq_dist, Matrix};
use tsmil::mil::{mil_forward, AttentionParams, ClassifierParams, MilModel};
use tsmil::params::Parameters;
use tsmil::pipeline::{
    extract_tissue_tiles, prepare_dataset, raw_from_specs, ExperimentConfig, ModelConfig, PreparedDataset, PreprocessConfig,
};
use tsmil::synth::{dataset_specs, generate_slide, pretraining_specs, DatasetConfig, SyntheticSlideSpec};

pub const FD_EPS: f64 = 1e-5;

/// A random small bag and model suitable for finite differences: ReLU
/// pre-activations are kept at least `margin` away from zero.
pub struct FdCase {
    pub tiles: Vec<RgbImage>,
    pub label: usize,
    pub model: MilModel,
}

pub fn random_fd_case(seed: u64) -> FdCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let k = rng.random_range(1..=5);
        let d = rng.random_range(1..=8);
        let h = rng.random_range(1..=8);
        let n = rng.random_range(2..=3);
        let mut extractor = ExtractorParams::init(8, d, rng.random()).unwrap();
        // Non-zero biases keep fully rectified receptive fields off the kink.
        extractor.visit_mut(&mut |name, data| {
            if name.ends_with("bias") {
                data.iter_mut().for_each(|b| *b = rng.random_range(-0.2..0.2));
            }
        });
        let tiles: Vec<RgbImage> = (0..k)
            .map(|_| RgbImage::from_raw(8, 8, (0..8 * 8 * 3).map(|_| rng.random()).collect()).unwrap())
            .collect();
        let margin = tiles
            .iter()
            .map(|t| extractor.forward_cached(t).unwrap().min_abs_preactivation())
            .fold(f64::INFINITY, f64::min);
        if margin < 1e-4 {
            continue;
        }
        let mut attention = AttentionParams::init(h, d, rng.random());
        attention.w_v.data.iter_mut().for_each(|w| *w *= 2.0);
        let mut classifier = ClassifierParams::init(n, d, rng.random());
        classifier.b_c.iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
        return FdCase { tiles, label: rng.random_range(0..n), model: MilModel { extractor, attention, classifier } };
    }
}

fn loss_only(tiles: &[RgbImage], label: usize, model: &MilModel) -> f64 {
    -mil_forward(tiles, model).unwrap().probs[label].ln()
}

fn nudge(model: &mut MilModel, tensor: usize, entry: usize, delta: f64) {
    let mut i = 0;
    model.visit_mut(&mut |_, data| {
        if i == tensor {
            data[entry] += delta;
        }
        i += 1;
    });
}

/// Central-difference gradient of the bag loss, tensor by tensor.
pub fn finite_difference_grads(tiles: &[RgbImage], label: usize, model: &MilModel) -> Vec<(String, Vec<f64>)> {
    let mut shapes = Vec::new();
    model.visit(&mut |name, _, data| shapes.push((name.to_string(), data.len())));
    let mut work = model.clone();
    shapes
        .into_iter()
        .enumerate()
        .map(|(t, (name, len))| {
            let g = (0..len)
                .map(|j| {
                    nudge(&mut work, t, j, FD_EPS);
                    let up = loss_only(tiles, label, &work);
                    nudge(&mut work, t, j, -2.0 * FD_EPS);
                    let down = loss_only(tiles, label, &work);
                    nudge(&mut work, t, j, FD_EPS);
                    (up - down) / (2.0 * FD_EPS)
                })
                .collect();
            (name, g)
        })
        .collect()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, or 0 when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale < 1e-12 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

/// Relative error per tensor that `trainable` should update.
pub fn gradient_check(case: &FdCase, trainable: Trainable) -> Vec<(String, f64)> {
    gradient_checks(case, &[trainable]).remove(0)
}

/// As [`gradient_check`] for several modes, sharing one finite-difference pass.
pub fn gradient_checks(case: &FdCase, modes: &[Trainable]) -> Vec<Vec<(String, f64)>> {
    let fd = finite_difference_grads(&case.tiles, case.label, &case.model);
    modes
        .iter()
        .map(|&trainable| {
            let (_, analytic) = tsmil::mil::loss_and_grads(&case.tiles, case.label, &case.model, trainable).unwrap();
            let mut analytic_tensors = Vec::new();
            analytic.visit(&mut |name, _, data| analytic_tensors.push((name.to_string(), data.to_vec())));
            analytic_tensors
                .into_iter()
                .zip(&fd)
                .filter(|((name, _), _)| match trainable {
                    Trainable::All => true,
                    Trainable::Upper => !name.starts_with("extractor.block1"),
                    Trainable::Frozen => !name.starts_with("extractor."),
                })
                .map(|((name, a), (_, f))| {
                    let err = relative_error(&a, f);
                    (name, err)
                })
                .collect()
        })
        .collect()
}

/// `n` tissue tiles drawn at random from a handful of rendered slides, plus a
/// colour reference pooled over tiles of other slides.
pub fn synthetic_tiles(n: usize, seed: u64) -> (Vec<RgbImage>, ColorStats) {
    let cfg = DatasetConfig { n_per_class: 3, patients_per_class: 3, ..Default::default() };
    let pre = PreprocessConfig::default();
    let mut pools: Vec<Vec<RgbImage>> = Vec::new();
    for (entry, spec) in dataset_specs(&cfg, seed).unwrap() {
        let (image, _) = generate_slide(&spec).unwrap();
        pools.push(extract_tissue_tiles(&entry.slide_id, entry.class, &image, &pre).unwrap().tiles);
    }
    let reference = ColorStats::from_images(&pools.iter().step_by(2).flatten().cloned().collect::<Vec<_>>());
    let candidates: Vec<&RgbImage> = pools.iter().skip(1).step_by(2).flatten().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tiles = candidates.choose_multiple(&mut rng, n).map(|t| (*t).clone()).collect();
    (tiles, reference)
}

pub fn max_byte_diff(a: &RgbImage, b: &RgbImage) -> u8 {
    a.data().iter().zip(b.data()).map(|(x, y)| x.abs_diff(*y)).max().unwrap_or(0)
}

/// Renders, tiles and normalizes a synthetic dataset plus its pretraining
/// slides.
pub fn prepare_synthetic(dcfg: &DatasetConfig, cfg: &ExperimentConfig, seed: u64) -> PreparedDataset {
    let specs = dataset_specs(dcfg, seed).unwrap();
    let just: Vec<SyntheticSlideSpec> = specs.iter().map(|(_, s)| s.clone()).collect();
    let raws = raw_from_specs(&just, &cfg.preprocess).unwrap();
    let slides = raws.into_iter().zip(specs.iter().map(|(e, _)| e.split)).collect();
    let pre_specs = pretraining_specs(dcfg, cfg.pretrain.slides_per_class, seed).unwrap();
    let pretrain = raw_from_specs(&pre_specs, &cfg.preprocess).unwrap();
    prepare_dataset(slides, pretrain, &cfg.pretrain, seed).unwrap()
}

/// A dataset and configuration small enough to train every variant in seconds.
pub fn tiny_setup() -> (DatasetConfig, ExperimentConfig) {
    let dcfg = DatasetConfig { n_per_class: 6, patients_per_class: 3, ..Default::default() };
    let mut cfg = ExperimentConfig::default();
    cfg.model = ModelConfig { hidden: 8, feature_dim: 8, init_candidates: 2 };
    cfg.pretrain.slides_per_class = 2;
    cfg.pretrain.tiles_per_class = 30;
    cfg.pretrain.train.epochs = 2;
    cfg.train.epochs = 4;
    cfg.train.warmup_epochs = 2;
    (dcfg, cfg)
}

/// Two Gaussian-ish blobs in the plane; returns points and the generating blob.
pub fn two_blobs(rng: &mut ChaCha8Rng, k: usize) -> (Matrix, Vec<usize>) {
    let centers = [[rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0)], [0.0, 0.0]];
    let mut centers = centers;
    centers[1] = [centers[0][0] + 40.0 * rng.random_range(0.5..1.5), centers[0][1] - 30.0 * rng.random_range(0.5..1.5)];
    let mut rows = Vec::new();
    let mut blob = Vec::new();
    for i in 0..k {
        // Both blobs keep at least one point.
        let b = if i < 2 { i } else { rng.random_range(0..2) };
        rows.push(vec![centers[b][0] + rng.random_range(-1.0..1.0), centers[b][1] + rng.random_range(-1.0..1.0)]);
        blob.push(b);
    }
    (Matrix::from_rows(&rows), blob)
}

pub fn sse(points: &Matrix, labels: &[usize], c: usize) -> f64 {
    let mut total = 0.0;
    for j in 0..c {
        let members: Vec<&[f64]> = (0..points.rows).filter(|&i| labels[i] == j).map(|i| points.row(i)).collect();
        if members.is_empty() {
            continue;
        }
        let mut mean = vec![0.0; points.cols];
        for m in &members {
            for (a, v) in mean.iter_mut().zip(*m) {
                *a += v / members.len() as f64;
            }
        }
        total += members.iter().map(|m| sq_dist(m, &mean)).sum::<f64>();
    }
    total
}

/// Optimal 2-clustering by enumerating every bipartition.
pub fn best_bipartition(points: &Matrix) -> Vec<usize> {
    let k = points.rows;
    let mut best = (f64::INFINITY, Vec::new());
    for mask in 1u32..(1 << (k - 1)) {
        let labels: Vec<usize> = (0..k).map(|i| ((mask >> i) & 1) as usize).collect();
        let cost = sse(points, &labels, 2);
        if cost < best.0 {
            best = (cost, labels);
        }
    }
    best.1
}

pub fn same_partition(a: &[usize], b: &[usize]) -> bool {
    (0..a.len()).all(|i| (0..a.len()).all(|j| (a[i] == a[j]) == (b[i] == b[j])))
}

/// Continuous capped shares by water-filling: the scale λ with
/// `Σ min(size_j, λ·w_j) = total`, found by bisection. Clusters without
/// weight only receive tiles once every weighted cluster is full, and then
/// share equally.
pub fn ideal_shares(weights: &[f64], total: usize, sizes: &[usize]) -> Vec<f64> {
    let fill = |w: &[f64], budget: f64| -> Vec<f64> {
        let filled = |lambda: f64| {
            w.iter().zip(sizes).map(|(&wj, &s)| if wj > 0.0 { (lambda * wj).min(s as f64) } else { 0.0 }).collect::<Vec<f64>>()
        };
        let cap: f64 = w.iter().zip(sizes).filter(|(&wj, _)| wj > 0.0).map(|(_, &s)| s as f64).sum();
        if budget >= cap {
            return filled(f64::INFINITY);
        }
        let (mut lo, mut hi) = (0.0, 1.0);
        while filled(hi).iter().sum::<f64>() < budget {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if filled(mid).iter().sum::<f64>() < budget {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        filled(hi)
    };
    let budget = total.min(sizes.iter().sum()) as f64;
    let mut shares = fill(weights, budget);
    let left = budget - shares.iter().sum::<f64>();
    if left > 1e-9 {
        let flat: Vec<f64> = weights.iter().zip(sizes).map(|(&w, &s)| if w == 0.0 && s > 0 { 1.0 } else { 0.0 }).collect();
        for (s, extra) in shares.iter_mut().zip(fill(&flat, left)) {
            *s += extra;
        }
    }
    shares
}

/// Largest remainder by exhaustion: among integer vectors within the caps and
/// with the right sum, the one closest to the ideal shares in squared error;
/// exact ties favour the lower cluster index.
pub fn brute_force_budgets(weights: &[f64], total: usize, sizes: &[usize]) -> Vec<usize> {
    let ideal = ideal_shares(weights, total, sizes);
    let target = total.min(sizes.iter().sum());
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut current = vec![0usize; sizes.len()];
    fn walk(j: usize, left: usize, sizes: &[usize], ideal: &[f64], current: &mut Vec<usize>, best: &mut Option<(f64, Vec<usize>)>) {
        if j == sizes.len() {
            if left == 0 {
                let cost: f64 = current.iter().zip(ideal).map(|(&b, &q)| (b as f64 - q).powi(2)).sum();
                let better = match best {
                    None => true,
                    Some((c, v)) => cost < *c - 1e-9 || ((cost - *c).abs() <= 1e-9 && current.as_slice() > v.as_slice()),
                };
                if better {
                    *best = Some((cost, current.clone()));
                }
            }
            return;
        }
        for b in 0..=sizes[j].min(left) {
            current[j] = b;
            walk(j + 1, left - b, sizes, ideal, current, best);
        }
        current[j] = 0;
    }
    walk(0, target, sizes, &ideal, &mut current, &mut best);
    best.unwrap().1
}

pub fn random_instance(rng: &mut ChaCha8Rng) -> (Vec<f64>, usize, Vec<usize>) {
    let c = rng.random_range(1..=4);
    let mut sizes: Vec<usize> = (0..c).map(|_| rng.random_range(0..=8)).collect();
    if sizes.iter().all(|&s| s == 0) {
        sizes[0] = 1;
    }
    // Some instances use coarse weights so that equal remainders occur.
    let coarse = rng.random_bool(0.3);
    let raw: Vec<f64> = sizes
        .iter()
        .map(|&s| {
            if s == 0 || rng.random_bool(0.15) {
                0.0
            } else if coarse {
                f64::from(rng.random_range(1..4u8))
            } else {
                rng.random_range(0.01..1.0)
            }
        })
        .collect();
    let sum: f64 = raw.iter().sum();
    let weights = if sum > 0.0 { raw.iter().map(|w| w / sum).collect() } else { raw };
    (weights, rng.random_range(1..=30), sizes)
}

/// Every admissible origin on one axis, found by scanning all offsets.
pub fn brute_positions(dim: usize, tile: usize, overlap: f64) -> Vec<usize> {
    let step = (tile as f64 * (1.0 - overlap)).round().max(1.0) as usize;
    (0..=dim).filter(|&p| p % step == 0 && p + tile <= dim).collect()
}
