use std::io::Write;

use super::{RgbImage, TileRef};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// `(100·B / (1 + R + G)) · (256 / (1 + R + G + B))` on raw byte values.
#[inline]
pub fn blue_ratio_pixel(rgb: [u8; 3]) -> f64 {
    let [r, g, b] = rgb.map(f64::from);
    (100.0 * b / (1.0 + r + g)) * (256.0 / (1.0 + r + g + b))
}

/// Per-pixel blue-ratio map, `height` rows by `width` columns.
pub fn blue_ratio(image: &RgbImage) -> Matrix {
    let data = image.pixels().map(blue_ratio_pixel).collect();
    Matrix::from_vec(image.height(), image.width(), data)
}

pub fn mean_blue_ratio(image: &RgbImage) -> f64 {
    image.pixels().map(blue_ratio_pixel).sum::<f64>() / image.pixel_count() as f64
}

/// Indices of the `n` highest-scoring tiles, descending; equal scores keep input order.
pub fn top_n_by_blue_ratio(images: &[RgbImage], n: usize) -> Vec<usize> {
    let scores: Vec<f64> = images.iter().map(mean_blue_ratio).collect();
    let mut order: Vec<usize> = (0..images.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order.truncate(n);
    order
}

/// Top `⌈k·p/100⌉` tiles by mean blue ratio.
pub fn rank_by_blue_ratio(tiles: &[TileRef], images: &[RgbImage], top_percentile: f64) -> Result<Vec<TileRef>> {
    if !(top_percentile > 0.0 && top_percentile <= 100.0) {
        return Err(Error::InvalidArgument(format!("percentile {top_percentile} outside (0, 100]")));
    }
    if tiles.len() != images.len() {
        return Err(Error::DimensionMismatch(format!("{} tiles but {} images", tiles.len(), images.len())));
    }
    let n = (tiles.len() as f64 * top_percentile / 100.0).ceil() as usize;
    Ok(top_n_by_blue_ratio(images, n).into_iter().map(|i| tiles[i].clone()).collect())
}

/// Row-major CSV, six decimal places.
pub fn write_blue_ratio_csv<W: Write>(map: &Matrix, mut out: W) -> Result<()> {
    for r in 0..map.rows {
        let line: Vec<String> = map.row(r).iter().map(|v| format!("{v:.6}")).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}
