use tsmil::imaging::{RgbImage, TileRef};

pub const HEAT_COLOR: [u8; 3] = [255, 0, 0];
pub const BOX_COLOR: [u8; 3] = [0, 0, 255];
/// Opacity of the heat layer on the most-attended tile.
pub const MAX_OPACITY: f64 = 0.6;

fn blend(base: [u8; 3], top: [u8; 3], opacity: f64) -> [u8; 3] {
    let mut out = [0u8; 3];
    for c in 0..3 {
        let v = (1.0 - opacity) * f64::from(base[c]) + opacity * f64::from(top[c]);
        out[c] = v.round().clamp(0.0, 255.0) as u8;
    }
    out
}

/// Red heat with opacity proportional to α / max α, then blue outlines around
/// the selected tiles. Where tiles overlap the larger weight wins.
pub fn render(slide: &RgbImage, tiles: &[TileRef], alpha: &[f64], selected: &[TileRef], tile_size: usize) -> RgbImage {
    let (w, h) = (slide.width(), slide.height());
    let max = alpha.iter().cloned().fold(0.0, f64::max);
    let mut heat = vec![0.0f64; w * h];
    if max > 0.0 {
        for (t, &a) in tiles.iter().zip(alpha) {
            let level = a / max;
            for y in t.y..(t.y + tile_size).min(h) {
                for x in t.x..(t.x + tile_size).min(w) {
                    let cell = &mut heat[y * w + x];
                    *cell = cell.max(level);
                }
            }
        }
    }
    let mut out = slide.clone();
    for y in 0..h {
        for x in 0..w {
            let level = heat[y * w + x];
            if level > 0.0 {
                out.put_pixel(x, y, blend(slide.pixel(x, y), HEAT_COLOR, MAX_OPACITY * level));
            }
        }
    }
    for t in selected {
        let (x1, y1) = ((t.x + tile_size).min(w) - 1, (t.y + tile_size).min(h) - 1);
        for x in t.x..=x1 {
            out.put_pixel(x, t.y, BOX_COLOR);
            out.put_pixel(x, y1, BOX_COLOR);
        }
        for y in t.y..=y1 {
            out.put_pixel(t.x, y, BOX_COLOR);
            out.put_pixel(x1, y, BOX_COLOR);
        }
    }
    out
}
