use std::io::Write;

use super::{allocate_budget, cluster_attention, kmeans, pca_fit_transform, ClusterAssignment};
use crate::error::{Error, Result};
use crate::features::InstanceFeatures;
use crate::imaging::{top_n_by_blue_ratio, RgbImage, TileRef};
use crate::mil::AttentionMap;

/// Chosen tiles plus everything that produced the choice.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    /// Bag indices of the selected tiles, in selection order.
    pub indices: Vec<usize>,
    pub selected: Vec<TileRef>,
    pub alpha: AttentionMap,
    /// Absent for methods that do not cluster.
    pub assignment: Option<ClusterAssignment>,
    /// Tiles taken per cluster; a single entry for unclustered methods.
    pub budgets: Vec<usize>,
}

impl SelectionResult {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn empty(alpha: AttentionMap) -> Self {
        Self { indices: vec![], selected: vec![], alpha, assignment: None, budgets: vec![0] }
    }

    /// One row per bag tile: `tile_x,tile_y,alpha,cluster,selected`. Cluster
    /// is `-1` when the method did not cluster.
    pub fn write_csv<W: Write>(&self, tiles: &[TileRef], mut out: W) -> Result<()> {
        writeln!(out, "tile_x,tile_y,alpha,cluster,selected")?;
        let mut chosen = vec![false; tiles.len()];
        for &i in &self.indices {
            chosen[i] = true;
        }
        for (i, t) in tiles.iter().enumerate() {
            let cluster = self.assignment.as_ref().map_or(-1, |a| a.labels[i] as i64);
            let alpha = self.alpha.weights.get(i).copied().unwrap_or(0.0);
            writeln!(out, "{},{},{:.9},{},{}", t.x, t.y, alpha, cluster, u8::from(chosen[i]))?;
        }
        Ok(())
    }
}

/// Bag indices sorted by descending α; equal weights keep bag order.
fn by_attention(alpha: &AttentionMap, among: impl Iterator<Item = usize>) -> Vec<usize> {
    let mut idx: Vec<usize> = among.collect();
    idx.sort_by(|&a, &b| alpha.weights[b].total_cmp(&alpha.weights[a]).then(a.cmp(&b)));
    idx
}

fn finish(tiles: &[TileRef], alpha: &AttentionMap, indices: Vec<usize>, assignment: Option<ClusterAssignment>, budgets: Vec<usize>) -> SelectionResult {
    SelectionResult {
        selected: indices.iter().map(|&i| tiles[i].clone()).collect(),
        indices,
        alpha: alpha.clone(),
        assignment,
        budgets,
    }
}

fn check_lengths(tiles: &[TileRef], alpha: &AttentionMap) -> Result<()> {
    if tiles.len() != alpha.len() {
        return Err(Error::DimensionMismatch(format!("{} tiles, {} attention weights", tiles.len(), alpha.len())));
    }
    Ok(())
}

/// The `n` tiles with the highest attention.
pub fn select_top_n_by_attention(tiles: &[TileRef], alpha: &AttentionMap, n: usize) -> Result<SelectionResult> {
    check_lengths(tiles, alpha)?;
    let mut idx = by_attention(alpha, 0..tiles.len());
    idx.truncate(n);
    let n = idx.len();
    Ok(finish(tiles, alpha, idx, None, vec![n]))
}

/// The top `⌈k·p/100⌉` tiles by attention.
pub fn select_att_topk(tiles: &[TileRef], alpha: &AttentionMap, top_percentile: f64) -> Result<SelectionResult> {
    if !(top_percentile > 0.0 && top_percentile <= 100.0) {
        return Err(Error::InvalidArgument(format!("percentile {top_percentile} outside (0, 100]")));
    }
    let n = (tiles.len() as f64 * top_percentile / 100.0).ceil() as usize;
    select_top_n_by_attention(tiles, alpha, n)
}

/// Blue-ratio baseline: the `n` tiles with the highest mean blue ratio.
pub fn select_by_blue_ratio(tiles: &[TileRef], images: &[RgbImage], alpha: &AttentionMap, n: usize) -> Result<SelectionResult> {
    if tiles.len() != images.len() {
        return Err(Error::DimensionMismatch(format!("{} tiles, {} images", tiles.len(), images.len())));
    }
    let idx = top_n_by_blue_ratio(images, n);
    let n = idx.len();
    Ok(finish(tiles, alpha, idx, None, vec![n]))
}

/// PCA on the instance features, k-means in the reduced space, then a
/// per-cluster budget proportional to the cluster's mean attention. Within a
/// cluster tiles are taken by descending α.
pub fn select_att_cluster(
    tiles: &[TileRef],
    alpha: &AttentionMap,
    features: &InstanceFeatures,
    p: usize,
    c: usize,
    total: usize,
    seed: u64,
) -> Result<SelectionResult> {
    check_lengths(tiles, alpha)?;
    if features.rows != tiles.len() {
        return Err(Error::DimensionMismatch(format!("{} feature rows for {} tiles", features.rows, tiles.len())));
    }
    if total == 0 {
        return Err(Error::EmptySelectionBudget);
    }
    let k = tiles.len();
    if k < 2 {
        return select_top_n_by_attention(tiles, alpha, total);
    }
    let p = p.min(k).min(features.cols).max(1);
    let c = c.min(k).max(1);
    let (_, reduced) = pca_fit_transform(features, p)?;
    let assignment = kmeans(&reduced, c, seed)?;
    let ca = cluster_attention(alpha, &assignment)?;
    let sizes = assignment.sizes();
    let budgets = allocate_budget(&ca, total, &sizes)?;
    let mut picked = Vec::new();
    for (j, &b) in budgets.iter().enumerate() {
        let members = (0..k).filter(|&i| assignment.labels[i] == j);
        picked.extend(by_attention(alpha, members).into_iter().take(b));
    }
    let indices = by_attention(alpha, picked.into_iter());
    Ok(finish(tiles, alpha, indices, Some(assignment), budgets))
}
