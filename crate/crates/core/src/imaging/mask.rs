use std::path::Path;

use super::RgbImage;
use crate::error::{Error, Result};

/// Boolean tissue mask, one bit per pixel (true = tissue).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TissueMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl TissueMask {
    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "mask {}x{} needs {} bits, got {}",
                width,
                height,
                width * height,
                bits.len()
            )));
        }
        Ok(Self { width, height, bits })
    }

    pub fn filled(width: usize, height: usize, value: bool) -> Self {
        Self { width, height, bits: vec![value; width * height] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Summed-area table with a zero guard row/column, `(w+1)·(h+1)` entries.
    pub(crate) fn integral(&self) -> Vec<u32> {
        let w1 = self.width + 1;
        let mut sat = vec![0u32; w1 * (self.height + 1)];
        for y in 0..self.height {
            let mut row = 0u32;
            for x in 0..self.width {
                row += u32::from(self.get(x, y));
                sat[(y + 1) * w1 + x + 1] = sat[y * w1 + x + 1] + row;
            }
        }
        sat
    }

    /// Writes the mask as an 8-bit grayscale PNG (0 / 255).
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let bytes: Vec<u8> = self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect();
        image::save_buffer(
            path,
            &bytes,
            self.width as u32,
            self.height as u32,
            image::ExtendedColorType::L8,
        )?;
        Ok(())
    }

    fn dilate(&self, radius: usize) -> Self {
        self.morph(radius, true)
    }

    fn erode(&self, radius: usize) -> Self {
        self.morph(radius, false)
    }

    // Square structuring element; out-of-image neighbours are ignored so that a
    // full mask survives erosion and an empty one survives dilation.
    fn morph(&self, radius: usize, dilate: bool) -> Self {
        if radius == 0 {
            return self.clone();
        }
        // Separable: a square window is a horizontal pass followed by a vertical one.
        let (w, h) = (self.width, self.height);
        let mut horiz = vec![false; w * h];
        for y in 0..h {
            for x in 0..w {
                let lo = x.saturating_sub(radius);
                let hi = (x + radius).min(w - 1);
                let row = &self.bits[y * w + lo..=y * w + hi];
                horiz[y * w + x] = if dilate { row.iter().any(|&b| b) } else { row.iter().all(|&b| b) };
            }
        }
        let mut out = vec![false; w * h];
        for y in 0..h {
            let lo = y.saturating_sub(radius);
            let hi = (y + radius).min(h - 1);
            for x in 0..w {
                let mut col = (lo..=hi).map(|yy| horiz[yy * w + x]);
                out[y * w + x] = if dilate { col.any(|b| b) } else { col.all(|b| b) };
            }
        }
        Self { width: w, height: h, bits: out }
    }
}

/// HSV hue of an RGB pixel, normalized to `[0, 1)`. Gray pixels have hue 0.
pub fn rgb_to_hue(rgb: [u8; 3]) -> f64 {
    let [r, g, b] = rgb.map(f64::from);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    if delta == 0.0 {
        return 0.0;
    }
    let sector = if max == r {
        ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        (b - r) / delta + 2.0
    } else {
        (r - g) / delta + 4.0
    };
    (sector / 6.0).rem_euclid(1.0)
}

/// Hue-band threshold followed by one closing and one opening with a square
/// structuring element of side `2·morph_radius + 1`.
pub fn tissue_mask(image: &RgbImage, hue_lo: f64, hue_hi: f64, morph_radius: usize) -> Result<TissueMask> {
    if image.data().is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(0.0..=1.0).contains(&hue_lo) || !(0.0..=1.0).contains(&hue_hi) || hue_lo >= hue_hi {
        return Err(Error::InvalidArgument(format!("hue band [{hue_lo}, {hue_hi}]")));
    }
    let bits = image
        .pixels()
        .map(|p| {
            let h = rgb_to_hue(p);
            h >= hue_lo && h <= hue_hi
        })
        .collect();
    let raw = TissueMask { width: image.width(), height: image.height(), bits };
    let closed = raw.dilate(morph_radius).erode(morph_radius);
    Ok(closed.erode(morph_radius).dilate(morph_radius))
}
