use super::ClusterAssignment;
use crate::error::{Error, Result};
use crate::mil::AttentionMap;

// Remainders closer than this are treated as tied (lower cluster index wins).
const TIE: f64 = 1e-12;

/// Normalized per-cluster mean attention.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAttention {
    pub mean_attention: Vec<f64>,
}

/// Mean α per cluster (0 for empty clusters), normalized to sum to one.
pub fn cluster_attention(alpha: &AttentionMap, assignment: &ClusterAssignment) -> Result<ClusterAttention> {
    if alpha.len() != assignment.labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} attention weights for {} labels",
            alpha.len(),
            assignment.labels.len()
        )));
    }
    let c = assignment.num_clusters();
    let mut sum = vec![0.0; c];
    let mut count = vec![0usize; c];
    for (&a, &l) in alpha.weights.iter().zip(&assignment.labels) {
        sum[l] += a;
        count[l] += 1;
    }
    let means: Vec<f64> = sum.iter().zip(&count).map(|(&s, &n)| if n > 0 { s / n as f64 } else { 0.0 }).collect();
    let total: f64 = means.iter().sum();
    let mean_attention = if total > 0.0 {
        means.iter().map(|m| m / total).collect()
    } else {
        // All attention is zero: fall back to the occupied clusters equally.
        let occupied = count.iter().filter(|&&n| n > 0).count().max(1) as f64;
        count.iter().map(|&n| if n > 0 { 1.0 / occupied } else { 0.0 }).collect()
    };
    Ok(ClusterAttention { mean_attention })
}

/// Integer budgets proportional to `weights`, capped by `sizes`, summing to
/// `min(total, Σ sizes)`.
///
/// Shares that reach a cluster's size are fixed at the size and the rest is
/// re-shared among the remaining clusters; when those carry no weight they
/// share equally. Final shares are rounded by largest remainder.
pub fn allocate_budget(cluster_att: &ClusterAttention, total: usize, sizes: &[usize]) -> Result<Vec<usize>> {
    let weights = &cluster_att.mean_attention;
    if weights.len() != sizes.len() {
        return Err(Error::DimensionMismatch(format!("{} weights for {} clusters", weights.len(), sizes.len())));
    }
    if total == 0 {
        return Err(Error::EmptySelectionBudget);
    }
    let c = sizes.len();
    let mut budgets = vec![0usize; c];
    let mut remaining = total.min(sizes.iter().sum());
    let mut active: Vec<usize> = (0..c).filter(|&j| sizes[j] > 0).collect();
    loop {
        if remaining == 0 || active.is_empty() {
            return Ok(budgets);
        }
        let w_sum: f64 = active.iter().map(|&j| weights[j]).sum();
        let share = |j: usize| {
            if w_sum > 0.0 {
                remaining as f64 * weights[j] / w_sum
            } else {
                remaining as f64 / active.len() as f64
            }
        };
        let capped: Vec<usize> = active.iter().copied().filter(|&j| share(j) >= sizes[j] as f64).collect();
        if capped.is_empty() {
            let shares: Vec<(usize, f64)> = active.iter().map(|&j| (j, share(j))).collect();
            let mut assigned = 0;
            for &(j, s) in &shares {
                budgets[j] = s.floor() as usize;
                assigned += budgets[j];
            }
            let mut by_remainder = shares.clone();
            by_remainder.sort_by(|a, b| {
                let (ra, rb) = (a.1 - a.1.floor(), b.1 - b.1.floor());
                if (ra - rb).abs() <= TIE {
                    a.0.cmp(&b.0)
                } else {
                    rb.total_cmp(&ra)
                }
            });
            for &(j, _) in by_remainder.iter().take(remaining - assigned) {
                budgets[j] += 1;
            }
            return Ok(budgets);
        }
        for &j in &capped {
            budgets[j] = sizes[j];
            remaining -= sizes[j];
        }
        active.retain(|j| !capped.contains(j));
    }
}
