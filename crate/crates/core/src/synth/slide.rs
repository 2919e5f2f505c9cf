use std::collections::VecDeque;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{extract_tile_grid, RgbImage, TileGrid};
use crate::seed::rng_for;
use crate::selection::SelectionResult;

/// Slide-level class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SlideClass {
    Benign,
    Low,
    High,
}

impl SlideClass {
    pub const ALL: [SlideClass; 3] = [SlideClass::Benign, SlideClass::Low, SlideClass::High];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            SlideClass::Benign => "benign",
            SlideClass::Low => "low",
            SlideClass::High => "high",
        }
    }

    pub fn is_cancer(self) -> bool {
        self != SlideClass::Benign
    }
}

impl fmt::Display for SlideClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SlideClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s).ok_or_else(|| Error::Format(format!("unknown class {s:?}")))
    }
}

/// Ground-truth label of one grid tile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TruthLabel {
    Background,
    BenignTissue,
    LowTexture,
    HighTexture,
}

impl TruthLabel {
    pub fn name(self) -> &'static str {
        match self {
            TruthLabel::Background => "background",
            TruthLabel::BenignTissue => "benign-tissue",
            TruthLabel::LowTexture => "low-texture",
            TruthLabel::HighTexture => "high-texture",
        }
    }

    pub fn is_lesion(self) -> bool {
        matches!(self, TruthLabel::LowTexture | TruthLabel::HighTexture)
    }

    pub fn is_tissue(self) -> bool {
        self != TruthLabel::Background
    }

    /// Tile class for instance-level training: benign tissue 0, low 1, high 2.
    pub fn tile_class(self) -> Option<usize> {
        match self {
            TruthLabel::Background => None,
            TruthLabel::BenignTissue => Some(0),
            TruthLabel::LowTexture => Some(1),
            TruthLabel::HighTexture => Some(2),
        }
    }
}

impl FromStr for TruthLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [TruthLabel::Background, TruthLabel::BenignTissue, TruthLabel::LowTexture, TruthLabel::HighTexture]
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| Error::Format(format!("unknown tile label {s:?}")))
    }
}

/// Per-tile labels aligned with the slide's tile grid (row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub grid: TileGrid,
    pub labels: Vec<TruthLabel>,
}

impl GroundTruth {
    pub fn label_at(&self, x: usize, y: usize) -> Option<TruthLabel> {
        let (col, row) = self.grid.cell_of(x, y)?;
        Some(self.labels[row * self.grid.xs.len() + col])
    }

    pub fn count(&self, pred: impl Fn(TruthLabel) -> bool) -> usize {
        self.labels.iter().filter(|&&l| pred(l)).count()
    }

    /// Grid as CSV: a header `y,<x0>,<x1>,…` then one row per grid row.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let xs: Vec<String> = self.grid.xs.iter().map(ToString::to_string).collect();
        writeln!(out, "y,{}", xs.join(","))?;
        for (r, y) in self.grid.ys.iter().enumerate() {
            let row = &self.labels[r * xs.len()..(r + 1) * xs.len()];
            let names: Vec<&str> = row.iter().map(|l| l.name()).collect();
            writeln!(out, "{y},{}", names.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R, tile_size: usize) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines.next().ok_or_else(|| Error::Format("empty ground-truth file".into()))??;
        let parse = |s: &str| s.trim().parse::<usize>().map_err(|e| Error::Format(format!("bad coordinate {s:?}: {e}")));
        let xs = header.split(',').skip(1).map(parse).collect::<Result<Vec<_>>>()?;
        let mut ys = Vec::new();
        let mut labels = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split(',');
            ys.push(parse(fields.next().unwrap_or(""))?);
            let row = fields.map(str::parse).collect::<Result<Vec<TruthLabel>>>()?;
            if row.len() != xs.len() {
                return Err(Error::Format(format!("ground-truth row has {} labels, expected {}", row.len(), xs.len())));
            }
            labels.extend(row);
        }
        let stride = if xs.len() > 1 { xs[1] - xs[0] } else { tile_size };
        Ok(Self { grid: TileGrid { tile_size, stride, xs, ys }, labels })
    }
}

/// Procedural stain and nuclear texture descriptors. Densities are nuclei
/// per 1000 px².
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextureParams {
    pub background: [u8; 3],
    pub stroma: [u8; 3],
    /// Solid nuclear stain of benign nuclei and glands.
    pub nucleus: [u8; 3],
    /// Lesion nuclei alternate these two in a 2×2 chromatin pattern whose
    /// mean equals `nucleus`: rows for low grade, a checkerboard for high.
    pub chromatin_dark: [u8; 3],
    pub chromatin_light: [u8; 3],
    pub pen: [u8; 3],
    pub benign_density: f64,
    /// Lesion density falls linearly from the core to the edge, in growth
    /// order.
    pub lesion_core_density: f64,
    pub lesion_edge_density: f64,
    pub nucleus_radius: (f64, f64),
    pub gland_radius: (f64, f64),
    pub max_glands: usize,
    /// Per-pixel uniform noise amplitude in bytes.
    pub noise: u8,
    /// Per-channel multiplicative stain gain applied to tissue pixels.
    pub stain_gain: [f64; 3],
}

impl Default for TextureParams {
    fn default() -> Self {
        Self {
            background: [238, 238, 238],
            stroma: [232, 162, 200],
            nucleus: [80, 50, 140],
            chromatin_dark: [50, 30, 110],
            chromatin_light: [110, 70, 170],
            pen: [40, 170, 70],
            benign_density: 6.0,
            lesion_core_density: 30.0,
            lesion_edge_density: 14.0,
            nucleus_radius: (1.6, 2.8),
            gland_radius: (4.5, 7.0),
            max_glands: 3,
            noise: 6,
            stain_gain: [1.0; 3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSlideSpec {
    pub slide_id: String,
    /// Side length in pixels at the reference magnification.
    pub slide_size: usize,
    pub tile_size: usize,
    pub overlap: f64,
    pub class: SlideClass,
    /// Fraction of tissue tiles painted with lesion texture.
    pub lesion_fraction: f64,
    pub texture: TextureParams,
    /// Approximate fraction of the slide left as background.
    pub background_fraction: f64,
    pub pen_marker: bool,
    pub patient_id: String,
    pub seed: u64,
}

impl SyntheticSlideSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.class.is_cancer() && !(self.lesion_fraction > 0.0 && self.lesion_fraction <= 1.0) {
            return bad(format!("lesion fraction {} outside (0, 1] for a {} slide", self.lesion_fraction, self.class));
        }
        if !self.class.is_cancer() && self.lesion_fraction != 0.0 {
            return bad(format!("benign slide with lesion fraction {}", self.lesion_fraction));
        }
        if !(0.0..0.95).contains(&self.background_fraction) {
            return bad(format!("background fraction {} outside [0, 0.95)", self.background_fraction));
        }
        if !self.slide_size.is_multiple_of(2) {
            return bad(format!("slide size {} must be even", self.slide_size));
        }
        extract_tile_grid(self.slide_size, self.slide_size, self.tile_size, self.overlap)?;
        Ok(())
    }

    pub fn grid(&self) -> Result<TileGrid> {
        extract_tile_grid(self.slide_size, self.slide_size, self.tile_size, self.overlap)
    }
}

struct TissueShape {
    cx: f64,
    cy: f64,
    radius: f64,
    harmonics: [(f64, f64, f64); 2],
}

impl TissueShape {
    fn sample(rng: &mut ChaCha8Rng, size: usize, background_fraction: f64) -> Self {
        let s = size as f64;
        let area = (1.0 - background_fraction) * s * s;
        let radius = (area / std::f64::consts::PI).sqrt();
        let jitter = (s / 2.0 - radius).max(0.0) * 0.5;
        Self {
            cx: s / 2.0 + rng.random_range(-1.0..=1.0) * jitter,
            cy: s / 2.0 + rng.random_range(-1.0..=1.0) * jitter,
            radius,
            harmonics: [
                (3.0, rng.random_range(0.04..0.10), rng.random_range(0.0..std::f64::consts::TAU)),
                (5.0, rng.random_range(0.02..0.06), rng.random_range(0.0..std::f64::consts::TAU)),
            ],
        }
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.cx, y - self.cy);
        let theta = dy.atan2(dx);
        let r = self.radius * self.harmonics.iter().fold(1.0, |acc, &(k, a, phi)| acc + a * (k * theta + phi).sin());
        dx * dx + dy * dy <= r * r
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Ink {
    None,
    Solid,
    Chromatin(SlideClass),
}

/// Marks 2×2-aligned nuclear cells covered by an ellipse.
fn stamp(ink: &mut [Ink], tissue: &[bool], size: usize, cx: f64, cy: f64, rx: f64, ry: f64, angle: f64, kind: Ink) {
    let reach = rx.max(ry).ceil() as i64 + 2;
    let (c, s) = (angle.cos(), angle.sin());
    let x0 = ((cx as i64 - reach).max(0) / 2) * 2;
    let y0 = ((cy as i64 - reach).max(0) / 2) * 2;
    let x1 = (cx as i64 + reach).min(size as i64 - 2);
    let y1 = (cy as i64 + reach).min(size as i64 - 2);
    let mut y = y0;
    while y <= y1 {
        let mut x = x0;
        while x <= x1 {
            let (dx, dy) = (x as f64 + 1.0 - cx, y as f64 + 1.0 - cy);
            let (u, v) = (dx * c + dy * s, -dx * s + dy * c);
            if (u / rx).powi(2) + (v / ry).powi(2) <= 1.0 {
                for (px, py) in [(x, y), (x + 1, y), (x, y + 1), (x + 1, y + 1)] {
                    let i = py as usize * size + px as usize;
                    if tissue[i] {
                        ink[i] = kind;
                    }
                }
            }
            x += 2;
        }
        y += 2;
    }
}

/// Grows a lesion of `count` tissue cells from a random start by randomized
/// breadth-first expansion. Returns cells in growth order (core first).
fn grow_lesion(rng: &mut ChaCha8Rng, tissue_cells: &[bool], cols: usize, count: usize) -> Vec<usize> {
    let rows = tissue_cells.len() / cols;
    let mut taken = vec![false; tissue_cells.len()];
    let mut order = Vec::with_capacity(count);
    let candidates: Vec<usize> = (0..tissue_cells.len()).filter(|&i| tissue_cells[i]).collect();
    while order.len() < count.min(candidates.len()) {
        let free: Vec<usize> = candidates.iter().copied().filter(|&i| !taken[i]).collect();
        let start = free[rng.random_range(0..free.len())];
        let mut queue = VecDeque::from([start]);
        taken[start] = true;
        while let Some(cell) = queue.pop_front() {
            order.push(cell);
            if order.len() == count {
                break;
            }
            let (c, r) = (cell % cols, cell / cols);
            let mut next = Vec::with_capacity(4);
            if c > 0 {
                next.push(cell - 1);
            }
            if c + 1 < cols {
                next.push(cell + 1);
            }
            if r > 0 {
                next.push(cell - cols);
            }
            if r + 1 < rows {
                next.push(cell + cols);
            }
            next.shuffle(rng);
            for n in next {
                if tissue_cells[n] && !taken[n] {
                    taken[n] = true;
                    queue.push_back(n);
                }
            }
        }
    }
    order
}

/// `mean` rounded up or down at random so the expectation is exact while the
/// count never strays more than one from it.
fn dithered_count(rng: &mut ChaCha8Rng, mean: f64) -> usize {
    (mean + rng.random::<f64>()).floor() as usize
}

fn shade(rgb: [u8; 3], gain: [f64; 3], noise: i32, rng: &mut ChaCha8Rng) -> [u8; 3] {
    let mut out = [0u8; 3];
    for c in 0..3 {
        let n = if noise > 0 { rng.random_range(-noise..=noise) } else { 0 };
        out[c] = (f64::from(rgb[c]) * gain[c] + f64::from(n)).round().clamp(0.0, 255.0) as u8;
    }
    out
}

/// Renders a slide and its tile-level ground truth. A pure function of the
/// spec.
pub fn generate_slide(spec: &SyntheticSlideSpec) -> Result<(RgbImage, GroundTruth)> {
    spec.validate()?;
    let size = spec.slide_size;
    let tex = &spec.texture;
    let grid = spec.grid()?;
    let cols = grid.xs.len();
    let mut rng = rng_for(spec.seed, "synthetic-slide");

    let shape = TissueShape::sample(&mut rng, size, spec.background_fraction);
    let tissue: Vec<bool> = (0..size * size).map(|i| shape.contains((i % size) as f64 + 0.5, (i / size) as f64 + 0.5)).collect();

    let t = grid.tile_size;
    let min_inside = (0.8 * (t * t) as f64).ceil() as usize;
    let tissue_cells: Vec<bool> = grid
        .origin_coords()
        .map(|(x, y)| (y..y + t).map(|py| tissue[py * size + x..py * size + x + t].iter().filter(|&&b| b).count()).sum::<usize>() >= min_inside)
        .collect();
    let n_tissue = tissue_cells.iter().filter(|&&b| b).count();

    let lesion_count = (spec.lesion_fraction * n_tissue as f64).round() as usize;
    let lesion = grow_lesion(&mut rng, &tissue_cells, cols, lesion_count);
    let mut density = vec![tex.benign_density; grid.len()];
    let mut lesion_cell = vec![false; grid.len()];
    for (rank, &cell) in lesion.iter().enumerate() {
        let r = if lesion.len() > 1 { rank as f64 / (lesion.len() - 1) as f64 } else { 0.0 };
        density[cell] = tex.lesion_core_density + (tex.lesion_edge_density - tex.lesion_core_density) * r;
        lesion_cell[cell] = true;
    }

    let labels: Vec<TruthLabel> = (0..grid.len())
        .map(|i| match (tissue_cells[i], lesion_cell[i], spec.class) {
            (false, _, _) => TruthLabel::Background,
            (true, false, _) | (true, true, SlideClass::Benign) => TruthLabel::BenignTissue,
            (true, true, SlideClass::Low) => TruthLabel::LowTexture,
            (true, true, SlideClass::High) => TruthLabel::HighTexture,
        })
        .collect();

    // Cells partition the slide along the stride; the last cell on each axis
    // runs to the edge.
    let cell_span = |idx: usize, axis: &[usize]| {
        let start = idx * grid.stride;
        let end = if idx + 1 == axis.len() { size } else { start + grid.stride };
        (start, end)
    };

    let mut ink = vec![Ink::None; size * size];
    for cell in 0..grid.len() {
        let (c, r) = (cell % cols, cell / cols);
        let (x0, x1) = cell_span(c, &grid.xs);
        let (y0, y1) = cell_span(r, &grid.ys);
        let area = ((x1 - x0) * (y1 - y0)) as f64;
        let kind = if lesion_cell[cell] { Ink::Chromatin(spec.class) } else { Ink::Solid };
        for _ in 0..dithered_count(&mut rng, density[cell] * area / 1000.0) {
            let cx = rng.random_range(x0 as f64..x1 as f64);
            let cy = rng.random_range(y0 as f64..y1 as f64);
            let rx = rng.random_range(tex.nucleus_radius.0..=tex.nucleus_radius.1);
            let ry = rng.random_range(tex.nucleus_radius.0..=tex.nucleus_radius.1);
            stamp(&mut ink, &tissue, size, cx, cy, rx, ry, rng.random_range(0.0..std::f64::consts::PI), kind);
        }
    }

    let mut gland_sites: Vec<usize> = (0..grid.len()).filter(|&i| tissue_cells[i] && !lesion_cell[i]).collect();
    gland_sites.shuffle(&mut rng);
    let n_glands = rng.random_range(0..=tex.max_glands).min(gland_sites.len());
    for &cell in &gland_sites[..n_glands] {
        let (x0, x1) = cell_span(cell % cols, &grid.xs);
        let (y0, y1) = cell_span(cell / cols, &grid.ys);
        for _ in 0..rng.random_range(2..=3) {
            let cx = rng.random_range(x0 as f64 + 4.0..x1 as f64 - 4.0);
            let cy = rng.random_range(y0 as f64 + 4.0..y1 as f64 - 4.0);
            let rx = rng.random_range(tex.gland_radius.0..=tex.gland_radius.1);
            let ry = rng.random_range(tex.gland_radius.0..=tex.gland_radius.1);
            stamp(&mut ink, &tissue, size, cx, cy, rx, ry, rng.random_range(0.0..std::f64::consts::PI), Ink::Solid);
        }
    }

    let pen = spec.pen_marker.then(|| {
        let horizontal = rng.random::<bool>();
        let offset = rng.random_range(4.0..14.0);
        let far_side = rng.random::<bool>();
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        (horizontal, if far_side { size as f64 - offset } else { offset }, phase)
    });

    let noise = i32::from(tex.noise);
    let mut data = Vec::with_capacity(size * size * 3);
    for y in 0..size {
        for x in 0..size {
            let i = y * size + x;
            let rgb = if tissue[i] {
                let base = match ink[i] {
                    Ink::None => tex.stroma,
                    Ink::Solid => tex.nucleus,
                    Ink::Chromatin(class) => {
                        let dark = match class {
                            SlideClass::High => (x % 2) == (y % 2),
                            _ => y % 2 == 0,
                        };
                        if dark { tex.chromatin_dark } else { tex.chromatin_light }
                    }
                };
                shade(base, tex.stain_gain, noise, &mut rng)
            } else {
                let on_pen = pen.is_some_and(|(horizontal, line, phase)| {
                    let (along, across) = if horizontal { (x, y) } else { (y, x) };
                    let centre = line + 3.0 * (along as f64 / 17.0 + phase).sin();
                    (across as f64 - centre).abs() <= 2.5
                });
                if on_pen {
                    shade(tex.pen, [1.0; 3], noise, &mut rng)
                } else {
                    let n = if noise > 0 { rng.random_range(-noise..=noise) } else { 0 };
                    tex.background.map(|v| (i32::from(v) + n).clamp(0, 255) as u8)
                }
            };
            data.extend_from_slice(&rgb);
        }
    }
    Ok((RgbImage::from_raw(size, size, data)?, GroundTruth { grid, labels }))
}

/// Fraction of the lesion tiles in `truth` that appear in the selection.
pub fn selection_recall(result: &SelectionResult, truth: &GroundTruth) -> Result<f64> {
    let positives = truth.count(TruthLabel::is_lesion);
    if positives == 0 {
        return Err(Error::NoPositives);
    }
    let mut hit = vec![false; truth.labels.len()];
    for t in &result.selected {
        let (col, row) = truth
            .grid
            .cell_of(t.x, t.y)
            .ok_or_else(|| Error::DimensionMismatch(format!("tile ({}, {}) is not on the ground-truth grid", t.x, t.y)))?;
        hit[row * truth.grid.xs.len() + col] = true;
    }
    let found = truth.labels.iter().zip(&hit).filter(|(l, &h)| l.is_lesion() && h).count();
    Ok(found as f64 / positives as f64)
}
