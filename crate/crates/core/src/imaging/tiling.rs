use serde::{Deserialize, Serialize};

use super::TissueMask;
use crate::error::{Error, Result};

/// Magnification tag. `High` is the reference magnification; `Low` is the
/// same slide downsampled by two.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scale {
    Low,
    High,
}

/// Square tiles on a regular grid. Coordinates are top-left corners at the
/// reference magnification, row-major (y outer).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileGrid {
    pub tile_size: usize,
    pub stride: usize,
    pub xs: Vec<usize>,
    pub ys: Vec<usize>,
}

impl TileGrid {
    pub fn origin_coords(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.ys.iter().flat_map(move |&y| self.xs.iter().map(move |&x| (x, y)))
    }

    pub fn len(&self) -> usize {
        self.xs.len() * self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Grid cell `(column, row)` of a tile origin, if it lies on the grid.
    pub fn cell_of(&self, x: usize, y: usize) -> Option<(usize, usize)> {
        let col = self.xs.binary_search(&x).ok()?;
        let row = self.ys.binary_search(&y).ok()?;
        Some((col, row))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileRef {
    pub slide_id: String,
    pub x: usize,
    pub y: usize,
    pub scale: Scale,
    pub tissue_fraction: f64,
}

impl TileRef {
    /// Same physical region at another magnification.
    pub fn at_scale(&self, scale: Scale) -> Self {
        Self { scale, ..self.clone() }
    }

    pub fn same_location(&self, other: &TileRef) -> bool {
        self.slide_id == other.slide_id && self.x == other.x && self.y == other.y
    }
}

fn axis_positions(dim: usize, tile_size: usize, stride: usize) -> Vec<usize> {
    (0..).map(|i| i * stride).take_while(|&p| p + tile_size <= dim).collect()
}

/// Overlapping grid with `stride = round(tile_size · (1 − overlap_fraction))`.
/// Positions that would run past the slide edge are dropped.
pub fn extract_tile_grid(slide_w: usize, slide_h: usize, tile_size: usize, overlap_fraction: f64) -> Result<TileGrid> {
    if tile_size == 0 {
        return Err(Error::InvalidArgument("tile size must be positive".into()));
    }
    if !(0.0..1.0).contains(&overlap_fraction) {
        return Err(Error::InvalidArgument(format!("overlap fraction {overlap_fraction} outside [0, 1)")));
    }
    if tile_size > slide_w.min(slide_h) {
        return Err(Error::TileExceedsSlide);
    }
    let stride = ((tile_size as f64 * (1.0 - overlap_fraction)).round() as usize).max(1);
    Ok(TileGrid {
        tile_size,
        stride,
        xs: axis_positions(slide_w, tile_size, stride),
        ys: axis_positions(slide_h, tile_size, stride),
    })
}

/// Keeps tiles whose tissue fraction reaches `min_tissue`, in grid order.
pub fn filter_tiles(grid: &TileGrid, mask: &TissueMask, min_tissue: f64, slide_id: &str) -> Result<Vec<TileRef>> {
    if !(0.0..=1.0).contains(&min_tissue) {
        return Err(Error::InvalidArgument(format!("min_tissue {min_tissue} outside [0, 1]")));
    }
    let t = grid.tile_size;
    let fits = grid.xs.last().is_none_or(|&x| x + t <= mask.width())
        && grid.ys.last().is_none_or(|&y| y + t <= mask.height());
    if !fits {
        return Err(Error::DimensionMismatch(format!(
            "grid extends beyond {}x{} mask",
            mask.width(),
            mask.height()
        )));
    }
    let sat = mask.integral();
    let w1 = mask.width() + 1;
    let area = (t * t) as f64;
    let mut out = Vec::new();
    for (x, y) in grid.origin_coords() {
        let count = sat[(y + t) * w1 + x + t] + sat[y * w1 + x] - sat[y * w1 + x + t] - sat[(y + t) * w1 + x];
        let fraction = f64::from(count) / area;
        if fraction >= min_tissue {
            out.push(TileRef { slide_id: slide_id.to_string(), x, y, scale: Scale::High, tissue_fraction: fraction });
        }
    }
    Ok(out)
}
