//! Reinhard color transfer in the lαβ opponent space
//! (RGB → LMS → log10 → lαβ). Bytes are mapped to `(v + 1) / 256` before the
//! LMS transform so the logarithm is always finite.

use serde::{Deserialize, Serialize};

use super::RgbImage;
use crate::error::{Error, Result};

const RGB_TO_LMS: [[f64; 3]; 3] = [
    [0.3811, 0.5783, 0.0402],
    [0.1967, 0.7244, 0.0782],
    [0.0241, 0.1288, 0.8444],
];

// Standard deviations below this are treated as a constant channel.
const CONSTANT_STD: f64 = 1e-9;

fn inverse3(m: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    let mut inv = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            // Cofactor of (c, r) gives the adjugate entry (r, c).
            let (r0, r1) = ((c + 1) % 3, (c + 2) % 3);
            let (c0, c1) = ((r + 1) % 3, (r + 2) % 3);
            inv[r][c] = (m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0]) / det;
        }
    }
    inv
}

fn mul3(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [0, 1, 2].map(|r| m[r][0] * v[0] + m[r][1] * v[1] + m[r][2] * v[2])
}

pub fn rgb_to_lab(rgb: [u8; 3]) -> [f64; 3] {
    let lin = rgb.map(|v| (f64::from(v) + 1.0) / 256.0);
    let [l, m, s] = mul3(&RGB_TO_LMS, lin).map(f64::log10);
    [
        (l + m + s) / 3f64.sqrt(),
        (l + m - 2.0 * s) / 6f64.sqrt(),
        (l - m) / 2f64.sqrt(),
    ]
}

pub fn lab_to_rgb(lab: [f64; 3]) -> [u8; 3] {
    let a = lab[0] / 3f64.sqrt();
    let b = lab[1] / 6f64.sqrt();
    let c = lab[2] / 2f64.sqrt();
    let lms = [a + b + c, a + b - c, a - 2.0 * b].map(|v| 10f64.powf(v));
    let inv = inverse3(&RGB_TO_LMS);
    mul3(&inv, lms).map(|v| (v * 256.0 - 1.0).round().clamp(0.0, 255.0) as u8)
}

/// Per-channel mean and standard deviation in lαβ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColorStats {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl ColorStats {
    pub fn new(mean: [f64; 3], std: [f64; 3]) -> Result<Self> {
        if std.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::InvalidArgument("reference std must be positive".into()));
        }
        Ok(Self { mean, std })
    }

    pub fn from_image(image: &RgbImage) -> Self {
        Self::from_images(std::slice::from_ref(image))
    }

    /// Pooled statistics over every pixel of every image. Constant channels
    /// report std 1.
    pub fn from_images(images: &[RgbImage]) -> Self {
        let mut sum = [0.0; 3];
        let mut sum_sq = [0.0; 3];
        let mut n = 0.0;
        for img in images {
            for p in img.pixels() {
                let lab = rgb_to_lab(p);
                for c in 0..3 {
                    sum[c] += lab[c];
                    sum_sq[c] += lab[c] * lab[c];
                }
                n += 1.0;
            }
        }
        let mean = sum.map(|s| s / n);
        let mut std = [1.0; 3];
        for c in 0..3 {
            let var = (sum_sq[c] / n - mean[c] * mean[c]).max(0.0);
            let s = var.sqrt();
            if s > CONSTANT_STD {
                std[c] = s;
            }
        }
        Self { mean, std }
    }
}

/// Maps `source` statistics onto `reference` statistics, pixel by pixel.
pub fn reinhard_transfer(image: &RgbImage, source: &ColorStats, reference: &ColorStats) -> RgbImage {
    let mut out = Vec::with_capacity(image.data().len());
    for p in image.pixels() {
        let lab = rgb_to_lab(p);
        let mapped = [0, 1, 2].map(|c| (lab[c] - source.mean[c]) * (reference.std[c] / source.std[c]) + reference.mean[c]);
        out.extend(lab_to_rgb(mapped));
    }
    RgbImage::from_raw(image.width(), image.height(), out).expect("same dimensions")
}

// Upper bound on re-normalization passes for out-of-gamut images.
const MAX_PASSES: usize = 256;

/// Normalizes an image using its own lαβ statistics as the source.
///
/// When clamping to bytes pulls the result off the reference statistics the
/// transfer is repeated on its own output until the bytes stop changing, so
/// the result is a fixed point of the transfer. In-gamut images settle after
/// one or two passes.
pub fn reinhard_normalize(image: &RgbImage, reference: &ColorStats) -> RgbImage {
    let pass = |img: &RgbImage| reinhard_transfer(img, &ColorStats::from_image(img), reference);
    let mut current = pass(image);
    for _ in 1..MAX_PASSES {
        let next = pass(&current);
        if next == current {
            break;
        }
        current = next;
    }
    current
}
