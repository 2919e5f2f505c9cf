use super::RgbImage;
use crate::error::{Error, Result};

/// Block-mean downsampling; each output byte is the mean of its
/// `factor`×`factor` source block, rounded half up.
pub fn downsample(image: &RgbImage, factor: usize) -> Result<RgbImage> {
    if factor == 0 {
        return Err(Error::InvalidArgument("downsample factor must be ≥ 1".into()));
    }
    if !image.width().is_multiple_of(factor) || !image.height().is_multiple_of(factor) {
        return Err(Error::DimensionNotDivisible);
    }
    if factor == 1 {
        return Ok(image.clone());
    }
    let (ow, oh) = (image.width() / factor, image.height() / factor);
    let n = (factor * factor) as u32;
    let mut out = Vec::with_capacity(ow * oh * 3);
    for oy in 0..oh {
        for ox in 0..ow {
            let mut sum = [0u32; 3];
            for y in oy * factor..(oy + 1) * factor {
                for x in ox * factor..(ox + 1) * factor {
                    let p = image.pixel(x, y);
                    for c in 0..3 {
                        sum[c] += u32::from(p[c]);
                    }
                }
            }
            out.extend(sum.map(|s| ((2 * s + n) / (2 * n)) as u8));
        }
    }
    RgbImage::from_raw(ow, oh, out)
}
