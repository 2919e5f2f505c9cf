mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tsmil::imaging::{Scale, TileRef};
use tsmil::linalg::{sq_dist, Matrix};
use tsmil::mil::AttentionMap;
use tsmil::selection::{
    allocate_budget, cluster_attention, kmeans, pca_fit_transform, select_att_cluster, select_att_topk, ClusterAttention,
};
use tsmil::Error;

fn refs(k: usize) -> Vec<TileRef> {
    (0..k).map(|i| TileRef { slide_id: "s".into(), x: 10 * i, y: 0, scale: Scale::High, tissue_fraction: 1.0 }).collect()
}

#[test]
fn kmeans_matches_exhaustive_optimum_on_two_blobs() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..60 {
        let k = rng.random_range(4..=12);
        let (points, blob) = common::two_blobs(&mut rng, k);
        let optimum = common::best_bipartition(&points);
        assert!(common::same_partition(&optimum, &blob), "case {case}: oracle disagrees with the generator");
        let fit = kmeans(&points, 2, case).unwrap();
        assert!(common::same_partition(&fit.labels, &optimum), "case {case}: {:?} vs {:?}", fit.labels, optimum);
    }
}

#[test]
fn kmeans_inertia_never_increases() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for seed in 0..50u64 {
        let k = rng.random_range(10..80);
        let d = rng.random_range(1..6);
        let c = rng.random_range(1..=6.min(k));
        let points = Matrix::from_vec(k, d, (0..k * d).map(|_| rng.random_range(-3.0..3.0)).collect());
        let fit = kmeans(&points, c, seed).unwrap();
        assert!(!fit.inertia_trace.is_empty());
        for w in fit.inertia_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-9 * w[0].max(1.0), "seed {seed}: {:?}", fit.inertia_trace);
        }
        let direct = common::sse(&points, &fit.labels, c);
        assert!(fit.inertia() >= direct - 1e-9, "final inertia below the optimal-centroid cost of its own labels");
        assert!(fit.labels.iter().all(|&l| l < c));
    }
}

#[test]
fn kmeans_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let points = Matrix::from_vec(7, 3, (0..21).map(|_| rng.random_range(-1.0..1.0)).collect());
    let own = kmeans(&points, 7, 3).unwrap();
    assert_eq!(own.sizes(), vec![1; 7]);
    assert!(own.inertia().abs() < 1e-12);
    assert!(matches!(kmeans(&points, 8, 3), Err(Error::TooManyClusters { .. })));

    let mut doubled = Vec::new();
    for i in 0..points.rows {
        doubled.push(points.row(i).to_vec());
        doubled.push(points.row(i).to_vec());
    }
    let once = kmeans(&points, 3, 17).unwrap();
    let twice = kmeans(&Matrix::from_rows(&doubled), 3, 17).unwrap();
    for (a, b) in once.centroids.data.iter().zip(&twice.centroids.data) {
        assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn budget_examples() {
    let att = |w: &[f64]| ClusterAttention { mean_attention: w.to_vec() };
    assert_eq!(allocate_budget(&att(&[0.4, 0.3, 0.2, 0.1]), 10, &[20; 4]).unwrap(), vec![4, 3, 2, 1]);
    assert_eq!(allocate_budget(&att(&[1.0, 0.0, 0.0, 0.0]), 5, &[3, 9, 9, 9]).unwrap(), vec![3, 1, 1, 0]);
    assert_eq!(allocate_budget(&att(&[0.5, 0.5]), 30, &[4, 6]).unwrap(), vec![4, 6]);
    assert_eq!(common::brute_force_budgets(&[0.4, 0.3, 0.2, 0.1], 10, &[20; 4]), vec![4, 3, 2, 1]);
    assert_eq!(common::brute_force_budgets(&[1.0, 0.0, 0.0, 0.0], 5, &[3, 9, 9, 9]), vec![3, 1, 1, 0]);
}

#[test]
fn budgets_match_brute_force_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for case in 0..500 {
        let (weights, total, sizes) = common::random_instance(&mut rng);
        let got = allocate_budget(&ClusterAttention { mean_attention: weights.clone() }, total, &sizes).unwrap();
        let want = common::brute_force_budgets(&weights, total, &sizes);
        assert_eq!(got, want, "case {case}: weights {weights:?} total {total} sizes {sizes:?}");
        assert_eq!(got.iter().sum::<usize>(), total.min(sizes.iter().sum()));
        assert!(got.iter().zip(&sizes).all(|(b, s)| b <= s));
    }
}

#[test]
fn cluster_attention_examples() {
    let assignment = kmeans(&Matrix::from_rows(&[vec![0.0], vec![0.1], vec![9.0]]), 2, 0).unwrap();
    let big = assignment.labels[2];
    let mut w = vec![0.002; 3];
    w[2] = 0.006;
    let ca = cluster_attention(&AttentionMap { weights: w }, &assignment).unwrap();
    assert!((ca.mean_attention[big] - 0.75).abs() < 1e-12);
    assert!((ca.mean_attention[1 - big] - 0.25).abs() < 1e-12);
}

proptest! {
    #[test]
    fn budget_sum_and_caps(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (weights, total, sizes) = common::random_instance(&mut rng);
        let got = allocate_budget(&ClusterAttention { mean_attention: weights }, total, &sizes).unwrap();
        prop_assert_eq!(got.iter().sum::<usize>(), total.min(sizes.iter().sum()));
        prop_assert!(got.iter().zip(&sizes).all(|(b, s)| b <= s));
    }

    #[test]
    fn attention_scale_does_not_change_selection(
        raw in proptest::collection::vec(0.01f64..1.0, 6..30),
        scale in 0.01f64..100.0,
        total in 1usize..12,
        seed in any::<u64>(),
    ) {
        let k = raw.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let features = Matrix::from_vec(k, 5, (0..k * 5).map(|_| rng.random_range(-1.0..1.0)).collect());
        let sum: f64 = raw.iter().sum();
        let alpha = AttentionMap { weights: raw.iter().map(|a| a / sum).collect() };
        let scaled = AttentionMap { weights: alpha.weights.iter().map(|a| a * scale).collect() };
        let tiles = refs(k);
        let a = select_att_cluster(&tiles, &alpha, &features, 3, 3, total, seed).unwrap();
        let b = select_att_cluster(&tiles, &scaled, &features, 3, 3, total, seed).unwrap();
        prop_assert_eq!(&a.budgets, &b.budgets);
        let mut ia = a.indices.clone();
        let mut ib = b.indices.clone();
        ia.sort_unstable();
        ib.sort_unstable();
        prop_assert_eq!(ia, ib);
        let assignment = a.assignment.as_ref().unwrap();
        let (ca, cb) = (cluster_attention(&alpha, assignment).unwrap(), cluster_attention(&scaled, assignment).unwrap());
        for (x, y) in ca.mean_attention.iter().zip(&cb.mean_attention) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn topk_selections_nest(raw in proptest::collection::vec(0.0f64..1.0, 1..40), p in 1.0f64..100.0) {
        let alpha = AttentionMap { weights: raw };
        let tiles = refs(alpha.len());
        let all = select_att_topk(&tiles, &alpha, 100.0).unwrap();
        let part = select_att_topk(&tiles, &alpha, p).unwrap();
        prop_assert_eq!(all.len(), tiles.len());
        prop_assert_eq!(part.len(), (tiles.len() as f64 * p / 100.0).ceil() as usize);
        prop_assert_eq!(&part.indices[..], &all.indices[..part.len()]);
        for w in all.indices.windows(2) {
            let (x, y) = (alpha.weights[w[0]], alpha.weights[w[1]]);
            prop_assert!(x > y || (x == y && w[0] < w[1]));
        }
    }

    #[test]
    fn pca_mean_projects_to_zero(data in proptest::collection::vec(-5.0f64..5.0, 4 * 6..=12 * 6), p in 1usize..=4) {
        let k = data.len() / 6;
        let v = Matrix::from_vec(k, 6, data[..k * 6].to_vec());
        let (model, _) = pca_fit_transform(&v, p).unwrap();
        prop_assert!(model.transform_row(&model.mean).iter().all(|x| x.abs() < 1e-10));
        for a in 0..p {
            for b in 0..p {
                let dot: f64 = model.basis.row(a).iter().zip(model.basis.row(b)).map(|(x, y)| x * y).sum();
                let want = if a == b { 1.0 } else { 0.0 };
                prop_assert!((dot - want).abs() < 1e-8);
            }
        }
    }
}

#[test]
fn pca_examples() {
    // Points on a 2-D affine plane inside R^5.
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let origin: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
    let u: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
    let w: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
    let rows: Vec<Vec<f64>> = (0..20)
        .map(|_| {
            let (a, b) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            (0..5).map(|j| origin[j] + a * u[j] + b * w[j]).collect()
        })
        .collect();
    let v = Matrix::from_rows(&rows);
    let (model, projected) = pca_fit_transform(&v, 2).unwrap();
    for (i, row) in rows.iter().enumerate() {
        let back = model.reconstruct_row(projected.row(i));
        assert!(sq_dist(&back, row).sqrt() < 1e-8);
    }

    let (_, full) = pca_fit_transform(&v, 5).unwrap();
    for i in 0..rows.len() {
        for j in 0..rows.len() {
            assert!((sq_dist(v.row(i), v.row(j)).sqrt() - sq_dist(full.row(i), full.row(j)).sqrt()).abs() < 1e-8);
        }
    }

    // Covariance diag(0.5, 0.005): first direction is the x axis.
    let cross = Matrix::from_rows(&[vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 0.1], vec![0.0, -0.1]]);
    let (m, y) = pca_fit_transform(&cross, 1).unwrap();
    assert!((m.basis.get(0, 0).abs() - 1.0).abs() < 1e-12 && m.basis.get(0, 1).abs() < 1e-12);
    let mut values: Vec<f64> = (0..4).map(|i| y.get(i, 0).abs()).collect();
    values.sort_by(f64::total_cmp);
    assert!(values[0] < 1e-12 && values[1] < 1e-12 && (values[2] - 1.0).abs() < 1e-12 && (values[3] - 1.0).abs() < 1e-12);

    assert!(matches!(pca_fit_transform(&Matrix::from_rows(&[vec![1.0, 2.0]]), 1), Err(Error::InsufficientInstances)));
}

#[test]
fn selection_examples() {
    let tiles = refs(6);
    let uniform = AttentionMap::uniform(6);
    let features = Matrix::from_vec(6, 2, (0..12).map(|i| i as f64).collect());
    let one = select_att_cluster(&tiles, &uniform, &features, 2, 1, 3, 0).unwrap();
    assert_eq!(one.indices, vec![0, 1, 2]);
    let everything = select_att_cluster(&tiles, &uniform, &features, 2, 2, 6, 0).unwrap();
    assert_eq!(everything.len(), 6);

    let topk = select_att_topk(&refs(3), &AttentionMap { weights: vec![0.7, 0.2, 0.1] }, 34.0).unwrap();
    assert_eq!(topk.indices, vec![0, 1]);
    let tie = select_att_topk(&refs(4), &AttentionMap::uniform(4), 50.0).unwrap();
    assert_eq!(tie.indices, vec![0, 1]);
}

#[test]
fn attended_feature_cluster_is_selected_whole() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for trial in 0..20u64 {
        let (k, m) = (16, rng.random_range(3..7));
        let positive: Vec<usize> = rand::seq::index::sample(&mut rng, k, m).into_vec();
        let is_pos = |i: usize| positive.contains(&i);
        let features = Matrix::from_vec(
            k,
            4,
            (0..k * 4).map(|e| if is_pos(e / 4) { 6.0 } else { 0.0 } + rng.random_range(-0.5..0.5)).collect(),
        );
        let mut raw: Vec<f64> = (0..k).map(|i| if is_pos(i) { 0.9 / m as f64 } else { 0.1 / (k - m) as f64 }).collect();
        for a in &mut raw {
            *a *= rng.random_range(0.9..1.1);
        }
        let s: f64 = raw.iter().sum();
        let alpha = AttentionMap { weights: raw.iter().map(|a| a / s).collect() };
        let sel = select_att_cluster(&refs(k), &alpha, &features, 2, 2, m, trial).unwrap();
        let mut got = sel.indices.clone();
        got.sort_unstable();
        let mut want = positive.clone();
        want.sort_unstable();
        assert_eq!(got, want, "trial {trial}");
    }
}
