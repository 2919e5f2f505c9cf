use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{
    downsample, extract_tile_grid, filter_tiles, reinhard_transfer, tissue_mask, ColorStats, RgbImage, Scale, TileRef,
};
use crate::mil::Bag;
use crate::synth::{GroundTruth, SlideClass};

/// Magnification step between the HIGH and LOW scales.
pub const LOW_FACTOR: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    /// Tile side at the HIGH scale; LOW tiles are half this.
    pub tile_size: usize,
    pub overlap: f64,
    pub min_tissue: f64,
    pub hue_lo: f64,
    pub hue_hi: f64,
    pub morph_radius: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self { tile_size: 32, overlap: 0.125, min_tissue: 0.8, hue_lo: 0.60, hue_hi: 0.98, morph_radius: 2 }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tile_size < 16 || !self.tile_size.is_multiple_of(LOW_FACTOR) {
            return Err(Error::InvalidArgument(format!("tile size {} must be even and at least 16", self.tile_size)));
        }
        if !(0.0..1.0).contains(&self.overlap) || !(0.0..=1.0).contains(&self.min_tissue) {
            return Err(Error::InvalidArgument("overlap must be in [0, 1) and min_tissue in [0, 1]".into()));
        }
        if !(0.0 <= self.hue_lo && self.hue_lo < self.hue_hi && self.hue_hi <= 1.0) {
            return Err(Error::InvalidArgument(format!("hue band [{}, {}] is invalid", self.hue_lo, self.hue_hi)));
        }
        Ok(())
    }

    pub fn low_tile_size(&self) -> usize {
        self.tile_size / LOW_FACTOR
    }
}

/// Tissue tiles of one slide before color normalization.
#[derive(Debug, Clone)]
pub struct RawSlide {
    pub slide_id: String,
    pub class: SlideClass,
    /// HIGH-scale references in grid order.
    pub tile_refs: Vec<TileRef>,
    pub tiles: Vec<RgbImage>,
    pub truth: Option<GroundTruth>,
}

impl RawSlide {
    /// Color statistics of the slide's tissue tiles; `None` without tissue.
    pub fn color_stats(&self) -> Option<ColorStats> {
        (!self.tiles.is_empty()).then(|| ColorStats::from_images(&self.tiles))
    }
}

/// A slide ready for both stages: normalized HIGH tiles and their LOW
/// counterparts at the same locations.
#[derive(Debug, Clone)]
pub struct PreparedSlide {
    pub slide_id: String,
    pub class: SlideClass,
    pub tile_refs: Vec<TileRef>,
    pub high: Vec<RgbImage>,
    pub low: Vec<RgbImage>,
    pub truth: Option<GroundTruth>,
}

impl PreparedSlide {
    pub fn len(&self) -> usize {
        self.tile_refs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tile_refs.is_empty()
    }

    pub fn low_refs(&self) -> Vec<TileRef> {
        self.tile_refs.iter().map(|t| t.at_scale(Scale::Low)).collect()
    }

    pub fn low_bag(&self, label: usize) -> Bag {
        Bag { slide_id: self.slide_id.clone(), tiles: self.low.clone(), tile_refs: self.low_refs(), label }
    }

    /// HIGH-scale bag over a subset of tiles, in the given order.
    pub fn high_bag(&self, indices: &[usize], label: usize) -> Bag {
        Bag {
            slide_id: self.slide_id.clone(),
            tiles: indices.iter().map(|&i| self.high[i].clone()).collect(),
            tile_refs: indices.iter().map(|&i| self.tile_refs[i].clone()).collect(),
            label,
        }
    }
}

/// Tissue mask, grid, and tissue filter at the HIGH scale.
pub fn extract_tissue_tiles(slide_id: &str, class: SlideClass, image: &RgbImage, cfg: &PreprocessConfig) -> Result<RawSlide> {
    cfg.validate()?;
    let mask = tissue_mask(image, cfg.hue_lo, cfg.hue_hi, cfg.morph_radius)?;
    let grid = extract_tile_grid(image.width(), image.height(), cfg.tile_size, cfg.overlap)?;
    let tile_refs = filter_tiles(&grid, &mask, cfg.min_tissue, slide_id)?;
    let tiles = tile_refs.iter().map(|t| image.crop(t.x, t.y, cfg.tile_size, cfg.tile_size)).collect::<Result<_>>()?;
    Ok(RawSlide { slide_id: slide_id.to_string(), class, tile_refs, tiles, truth: None })
}

/// Pooled color statistics over the tissue tiles of `slides`.
pub fn reference_stats(slides: &[RawSlide]) -> Result<ColorStats> {
    let tiles: Vec<RgbImage> = slides.iter().flat_map(|s| s.tiles.iter().cloned()).collect();
    if tiles.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(ColorStats::from_images(&tiles))
}

/// Maps the slide's own tissue statistics onto `reference`, then derives the
/// LOW tiles by block-mean downsampling.
pub fn normalize_slide(raw: RawSlide, reference: &ColorStats) -> Result<PreparedSlide> {
    let high: Vec<RgbImage> = match raw.color_stats() {
        Some(source) => raw.tiles.iter().map(|t| reinhard_transfer(t, &source, reference)).collect(),
        None => Vec::new(),
    };
    let low = high.iter().map(|t| downsample(t, LOW_FACTOR)).collect::<Result<_>>()?;
    Ok(PreparedSlide { slide_id: raw.slide_id, class: raw.class, tile_refs: raw.tile_refs, high, low, truth: raw.truth })
}

/// Per-channel mean byte over every pixel of the given tiles.
pub fn mean_rgb(tiles: &[&RgbImage]) -> [u8; 3] {
    let mut sum = [0.0; 3];
    let mut n = 0.0;
    for t in tiles {
        for p in t.pixels() {
            for c in 0..3 {
                sum[c] += f64::from(p[c]);
            }
            n += 1.0;
        }
    }
    if n == 0.0 {
        return [0; 3];
    }
    sum.map(|s| (s / n).round() as u8)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_background_slide_has_no_tiles() {
        let img = RgbImage::filled(64, 64, [238, 238, 238]).unwrap();
        let raw = extract_tissue_tiles("s", SlideClass::Benign, &img, &PreprocessConfig::default()).unwrap();
        assert!(raw.tiles.is_empty());
        assert!(raw.color_stats().is_none());
        let ref_stats = ColorStats::new([0.0; 3], [1.0; 3]).unwrap();
        let prepared = normalize_slide(raw, &ref_stats).unwrap();
        assert!(prepared.is_empty());
    }

    #[test]
    fn low_tiles_are_downsampled_high_tiles() {
        let img = RgbImage::filled(32, 32, [232, 162, 200]).unwrap();
        let raw = extract_tissue_tiles("s", SlideClass::Low, &img, &PreprocessConfig::default()).unwrap();
        assert_eq!(raw.tiles.len(), 1);
        let stats = raw.color_stats().unwrap();
        let p = normalize_slide(raw, &stats).unwrap();
        assert_eq!(p.low[0].width(), 16);
        assert_eq!(p.low[0], downsample(&p.high[0], 2).unwrap());
        assert_eq!(p.low_refs()[0].scale, Scale::Low);
    }

    #[test]
    fn mean_rgb_rounds() {
        let a = RgbImage::filled(1, 1, [0, 10, 255]).unwrap();
        let b = RgbImage::filled(1, 1, [1, 11, 255]).unwrap();
        assert_eq!(mean_rgb(&[&a, &b]), [1, 11, 255]);
    }
}
