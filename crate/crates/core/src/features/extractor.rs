//! Small convolutional tile encoder with hand-derived gradients.
//!
//! Three 3×3 stride-2 blocks (padding 1, ReLU) with widths 3→8→16→32, a 1×1
//! convolution down to 8 channels, flatten, and a dense layer to `d`
//! features. A 32×32 tile gives a 32×4×4 map, reduced to 8×4×4 = 128 inputs
//! for the dense layer; a 16×16 tile gives 8×2×2 = 32.

use rand::Rng;

use super::InstanceFeatures;
use crate::error::{Error, Result};
use crate::imaging::RgbImage;
use crate::linalg::Matrix;
use crate::params::Parameters;
use crate::seed::rng_for;

pub const CHANNELS: [usize; 4] = [3, 8, 16, 32];
pub const REDUCED_CHANNELS: usize = 8;
const KERNEL: usize = 3;

/// Which parts of the extractor receive gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trainable {
    /// Nothing; features are treated as fixed inputs.
    Frozen,
    /// Blocks 2 and 3 plus the 1×1 reduction and the embedding. Block 1 stays fixed.
    Upper,
    All,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub in_channels: usize,
    pub out_channels: usize,
    /// `[out][in][3][3]`
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvLayer {
    fn zeros(in_channels: usize, out_channels: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            weight: vec![0.0; out_channels * in_channels * KERNEL * KERNEL],
            bias: vec![0.0; out_channels],
        }
    }

    /// Stride-2, padding-1 convolution of a `side`×`side` map.
    fn forward(&self, input: &[f64], side: usize) -> Vec<f64> {
        let out_side = conv_out_side(side);
        let plane = out_side * out_side;
        let mut out = vec![0.0; self.out_channels * plane];
        for oc in 0..self.out_channels {
            let dst = &mut out[oc * plane..(oc + 1) * plane];
            dst.iter_mut().for_each(|v| *v = self.bias[oc]);
            for ic in 0..self.in_channels {
                let src = &input[ic * side * side..(ic + 1) * side * side];
                let w = &self.weight[(oc * self.in_channels + ic) * 9..][..9];
                for ky in 0..KERNEL {
                    for kx in 0..KERNEL {
                        let wv = w[ky * KERNEL + kx];
                        for oy in 0..out_side {
                            let iy = 2 * oy + ky;
                            if iy == 0 || iy > side {
                                continue;
                            }
                            let row = &src[(iy - 1) * side..iy * side];
                            let drow = &mut dst[oy * out_side..(oy + 1) * out_side];
                            for (ox, d) in drow.iter_mut().enumerate() {
                                let ix = 2 * ox + kx;
                                if ix == 0 || ix > side {
                                    continue;
                                }
                                *d += wv * row[ix - 1];
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Accumulates weight/bias gradients for `d_pre` (gradient at the
    /// pre-activation) and optionally returns the input gradient.
    fn backward(
        &self,
        input: &[f64],
        side: usize,
        d_pre: &[f64],
        grads: &mut ConvLayer,
        want_input_grad: bool,
    ) -> Option<Vec<f64>> {
        let out_side = conv_out_side(side);
        let plane = out_side * out_side;
        let mut d_input = want_input_grad.then(|| vec![0.0; self.in_channels * side * side]);
        for oc in 0..self.out_channels {
            let dp = &d_pre[oc * plane..(oc + 1) * plane];
            grads.bias[oc] += dp.iter().sum::<f64>();
            for ic in 0..self.in_channels {
                let src = &input[ic * side * side..(ic + 1) * side * side];
                let widx = (oc * self.in_channels + ic) * 9;
                for ky in 0..KERNEL {
                    for kx in 0..KERNEL {
                        let wv = self.weight[widx + ky * KERNEL + kx];
                        let mut acc = 0.0;
                        for oy in 0..out_side {
                            let iy = 2 * oy + ky;
                            if iy == 0 || iy > side {
                                continue;
                            }
                            for ox in 0..out_side {
                                let ix = 2 * ox + kx;
                                if ix == 0 || ix > side {
                                    continue;
                                }
                                let g = dp[oy * out_side + ox];
                                acc += g * src[(iy - 1) * side + ix - 1];
                                if let Some(di) = d_input.as_mut() {
                                    di[ic * side * side + (iy - 1) * side + ix - 1] += wv * g;
                                }
                            }
                        }
                        grads.weight[widx + ky * KERNEL + kx] += acc;
                    }
                }
            }
        }
        d_input
    }
}

fn conv_out_side(side: usize) -> usize {
    side.div_ceil(2)
}

/// Trainable state of the tile encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtractorParams {
    input_side: usize,
    pub blocks: [ConvLayer; 3],
    /// `[REDUCED_CHANNELS][32]`, no bias.
    pub reduce: Vec<f64>,
    pub embed_weight: Matrix,
    pub embed_bias: Vec<f64>,
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct TileActivations {
    input: Vec<f64>,
    pre: [Vec<f64>; 3],
    post: [Vec<f64>; 3],
    reduced: Vec<f64>,
    pub feature: Vec<f64>,
}

impl TileActivations {
    /// Smallest |pre-activation| across the ReLU layers; finite-difference
    /// checks are only meaningful away from the kinks.
    pub fn min_abs_preactivation(&self) -> f64 {
        self.pre.iter().flatten().map(|v| v.abs()).fold(f64::INFINITY, f64::min)
    }
}

impl ExtractorParams {
    pub fn zeros(input_side: usize, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidArgument("feature dimension must be ≥ 1".into()));
        }
        if input_side < 8 {
            return Err(Error::InvalidArgument(format!("tile side {input_side} below 8")));
        }
        let map_side = final_map_side(input_side);
        Ok(Self {
            input_side,
            blocks: [
                ConvLayer::zeros(CHANNELS[0], CHANNELS[1]),
                ConvLayer::zeros(CHANNELS[1], CHANNELS[2]),
                ConvLayer::zeros(CHANNELS[2], CHANNELS[3]),
            ],
            reduce: vec![0.0; REDUCED_CHANNELS * CHANNELS[3]],
            embed_weight: Matrix::zeros(d, REDUCED_CHANNELS * map_side * map_side),
            embed_bias: vec![0.0; d],
        })
    }

    /// Glorot-uniform weights, zero biases, reproducible from `seed`.
    pub fn init(input_side: usize, d: usize, seed: u64) -> Result<Self> {
        let mut p = Self::zeros(input_side, d)?;
        let mut rng = rng_for(seed, "extractor-init");
        let mut fill = |data: &mut [f64], fan_in: usize, fan_out: usize| {
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            data.iter_mut().for_each(|v| *v = rng.random_range(-a..a));
        };
        for b in &mut p.blocks {
            let (fi, fo) = (b.in_channels * 9, b.out_channels * 9);
            fill(&mut b.weight, fi, fo);
        }
        fill(&mut p.reduce, CHANNELS[3], REDUCED_CHANNELS);
        let (rows, cols) = (p.embed_weight.rows, p.embed_weight.cols);
        fill(&mut p.embed_weight.data, cols, rows);
        Ok(p)
    }

    pub fn input_side(&self) -> usize {
        self.input_side
    }

    pub fn feature_dim(&self) -> usize {
        self.embed_bias.len()
    }

    fn encode(&self, tile: &RgbImage) -> Result<Vec<f64>> {
        if tile.width() != self.input_side || tile.height() != self.input_side {
            return Err(Error::DimensionMismatch(format!(
                "extractor expects {}x{} tiles, got {}x{}",
                self.input_side,
                self.input_side,
                tile.width(),
                tile.height()
            )));
        }
        let plane = self.input_side * self.input_side;
        let mut x = vec![0.0; 3 * plane];
        for (i, p) in tile.pixels().enumerate() {
            for c in 0..3 {
                x[c * plane + i] = f64::from(p[c]) / 255.0 - 0.5;
            }
        }
        Ok(x)
    }

    pub fn forward_cached(&self, tile: &RgbImage) -> Result<TileActivations> {
        let input = self.encode(tile)?;
        let mut side = self.input_side;
        let mut pre: [Vec<f64>; 3] = Default::default();
        let mut post: [Vec<f64>; 3] = Default::default();
        for (i, block) in self.blocks.iter().enumerate() {
            let x = if i == 0 { &input } else { &post[i - 1] };
            let z = block.forward(x, side);
            post[i] = z.iter().map(|&v| v.max(0.0)).collect();
            pre[i] = z;
            side = conv_out_side(side);
        }
        let plane = side * side;
        let top = &post[2];
        let mut reduced = vec![0.0; REDUCED_CHANNELS * plane];
        for r in 0..REDUCED_CHANNELS {
            for c in 0..CHANNELS[3] {
                let w = self.reduce[r * CHANNELS[3] + c];
                for s in 0..plane {
                    reduced[r * plane + s] += w * top[c * plane + s];
                }
            }
        }
        let mut feature = self.embed_weight.matvec(&reduced);
        for (f, b) in feature.iter_mut().zip(&self.embed_bias) {
            *f += b;
        }
        Ok(TileActivations { input, pre, post, reduced, feature })
    }

    pub fn forward(&self, tile: &RgbImage) -> Result<Vec<f64>> {
        Ok(self.forward_cached(tile)?.feature)
    }

    /// Backpropagates `d_feature` through one tile, accumulating into `grads`.
    pub fn backward(&self, acts: &TileActivations, d_feature: &[f64], grads: &mut ExtractorParams, trainable: Trainable) {
        if trainable == Trainable::Frozen {
            return;
        }
        for (r, &g) in d_feature.iter().enumerate() {
            grads.embed_bias[r] += g;
            crate::linalg::axpy(g, &acts.reduced, grads.embed_weight.row_mut(r));
        }
        let d_reduced = self.embed_weight.matvec_t(d_feature);
        let sides = self.block_sides();
        let plane = sides[3] * sides[3];
        let top = &acts.post[2];
        let mut d_top = vec![0.0; CHANNELS[3] * plane];
        for r in 0..REDUCED_CHANNELS {
            for c in 0..CHANNELS[3] {
                let w = self.reduce[r * CHANNELS[3] + c];
                let mut acc = 0.0;
                for s in 0..plane {
                    let g = d_reduced[r * plane + s];
                    acc += g * top[c * plane + s];
                    d_top[c * plane + s] += w * g;
                }
                grads.reduce[r * CHANNELS[3] + c] += acc;
            }
        }
        let lowest = if trainable == Trainable::All { 0 } else { 1 };
        let mut d_post = d_top;
        for i in (lowest..3).rev() {
            let d_pre: Vec<f64> = d_post.iter().zip(&acts.pre[i]).map(|(&g, &z)| if z > 0.0 { g } else { 0.0 }).collect();
            let input = if i == 0 { &acts.input } else { &acts.post[i - 1] };
            match self.blocks[i].backward(input, sides[i], &d_pre, &mut grads.blocks[i], i > lowest) {
                Some(d) => d_post = d,
                None => break,
            }
        }
    }

    fn block_sides(&self) -> [usize; 4] {
        let s0 = self.input_side;
        let s1 = conv_out_side(s0);
        let s2 = conv_out_side(s1);
        [s0, s1, s2, conv_out_side(s2)]
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.fill(0.0);
        z
    }
}

fn final_map_side(input_side: usize) -> usize {
    conv_out_side(conv_out_side(conv_out_side(input_side)))
}

impl Parameters for ExtractorParams {
    fn visit(&self, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        for (i, b) in self.blocks.iter().enumerate() {
            f(
                &format!("block{}.weight", i + 1),
                &[b.out_channels, b.in_channels, KERNEL, KERNEL],
                &b.weight,
            );
            f(&format!("block{}.bias", i + 1), &[b.out_channels], &b.bias);
        }
        f("reduce.weight", &[REDUCED_CHANNELS, CHANNELS[3]], &self.reduce);
        f("embed.weight", &[self.embed_weight.rows, self.embed_weight.cols], &self.embed_weight.data);
        f("embed.bias", &[self.embed_bias.len()], &self.embed_bias);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        for (i, b) in self.blocks.iter_mut().enumerate() {
            f(&format!("block{}.weight", i + 1), &mut b.weight);
            f(&format!("block{}.bias", i + 1), &mut b.bias);
        }
        f("reduce.weight", &mut self.reduce);
        f("embed.weight", &mut self.embed_weight.data);
        f("embed.bias", &mut self.embed_bias);
    }
}

/// Runs the encoder over every tile; row `i` is the feature of tile `i`.
pub fn extract_features(tiles: &[RgbImage], params: &ExtractorParams) -> Result<InstanceFeatures> {
    let d = params.feature_dim();
    let mut data = Vec::with_capacity(tiles.len() * d);
    for t in tiles {
        data.extend(params.forward(t)?);
    }
    Ok(Matrix::from_vec(tiles.len(), d, data))
}
