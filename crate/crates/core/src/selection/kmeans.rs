use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{sq_dist, Matrix};
use crate::seed::rng_for;

pub const MAX_ITERATIONS: usize = 100;
pub const SHIFT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    /// `c × p`
    pub centroids: Matrix,
    /// Cluster id per point, each `< c`.
    pub labels: Vec<usize>,
    /// Inertia after every assignment step; non-increasing.
    pub inertia_trace: Vec<f64>,
}

impl ClusterAssignment {
    pub fn num_clusters(&self) -> usize {
        self.centroids.rows
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.num_clusters()];
        for &l in &self.labels {
            s[l] += 1;
        }
        s
    }

    pub fn inertia(&self) -> f64 {
        self.inertia_trace.last().copied().unwrap_or(0.0)
    }
}

fn nearest(point: &[f64], centroids: &Matrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for c in 0..centroids.rows {
        let d = sq_dist(point, centroids.row(c));
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

// Index where the cumulative weight first exceeds `u · total`. Sampling
// through a single uniform keeps the draw invariant under duplicating points
// in place, which makes runs on duplicated data comparable.
fn sample_weighted(weights: &[f64], u: f64) -> usize {
    let total: f64 = weights.iter().sum();
    let target = u * total;
    let mut cum = 0.0;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            last_positive = i;
        }
        cum += w;
        if cum > target && w > 0.0 {
            return i;
        }
    }
    last_positive
}

fn plus_plus_init<R: Rng>(points: &Matrix, c: usize, rng: &mut R) -> Matrix {
    let k = points.rows;
    let mut centroids = Matrix::zeros(c, points.cols);
    let first = ((rng.random::<f64>() * k as f64) as usize).min(k - 1);
    centroids.row_mut(0).copy_from_slice(points.row(first));
    let mut d2: Vec<f64> = (0..k).map(|i| sq_dist(points.row(i), points.row(first))).collect();
    for j in 1..c {
        let u = rng.random::<f64>();
        let pick = if d2.iter().sum::<f64>() > 0.0 {
            sample_weighted(&d2, u)
        } else {
            ((u * k as f64) as usize).min(k - 1)
        };
        centroids.row_mut(j).copy_from_slice(points.row(pick));
        for (i, slot) in d2.iter_mut().enumerate() {
            *slot = slot.min(sq_dist(points.row(i), points.row(pick)));
        }
    }
    centroids
}

fn assign(points: &Matrix, centroids: &Matrix, labels: &mut [usize]) -> f64 {
    let mut inertia = 0.0;
    for (i, l) in labels.iter_mut().enumerate() {
        let (c, d) = nearest(points.row(i), centroids);
        *l = c;
        inertia += d;
    }
    inertia
}

/// Lloyd's algorithm with k-means++ seeding. Stops after
/// [`MAX_ITERATIONS`] or once no centroid moves more than [`SHIFT_TOLERANCE`].
/// A cluster that empties is reseeded at the point farthest from its centroid.
pub fn kmeans(points: &Matrix, c: usize, seed: u64) -> Result<ClusterAssignment> {
    let k = points.rows;
    if c == 0 {
        return Err(Error::InvalidArgument("cluster count must be ≥ 1".into()));
    }
    if c > k {
        return Err(Error::TooManyClusters { clusters: c, points: k });
    }
    let mut rng = rng_for(seed, "kmeans");
    let mut centroids = plus_plus_init(points, c, &mut rng);
    let mut labels = vec![0; k];
    let mut trace = Vec::new();
    for _ in 0..MAX_ITERATIONS {
        trace.push(assign(points, &centroids, &mut labels));
        let mut next = Matrix::zeros(c, points.cols);
        let mut counts = vec![0usize; c];
        for (i, &l) in labels.iter().enumerate() {
            counts[l] += 1;
            crate::linalg::axpy(1.0, points.row(i), next.row_mut(l));
        }
        let mut dist_to_own: Vec<f64> = (0..k).map(|i| sq_dist(points.row(i), centroids.row(labels[i]))).collect();
        for j in 0..c {
            if counts[j] > 0 {
                let inv = 1.0 / counts[j] as f64;
                next.row_mut(j).iter_mut().for_each(|v| *v *= inv);
            } else {
                let mut far = 0;
                for i in 1..k {
                    if dist_to_own[i] > dist_to_own[far] {
                        far = i;
                    }
                }
                next.row_mut(j).copy_from_slice(points.row(far));
                dist_to_own[far] = -1.0;
            }
        }
        let shift = (0..c).map(|j| sq_dist(next.row(j), centroids.row(j)).sqrt()).fold(0.0, f64::max);
        centroids = next;
        if shift < SHIFT_TOLERANCE {
            break;
        }
    }
    trace.push(assign(points, &centroids, &mut labels));
    Ok(ClusterAssignment { centroids, labels, inertia_trace: trace })
}
