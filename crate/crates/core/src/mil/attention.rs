use rand::Rng;

use crate::error::{Error, Result};
use crate::features::InstanceFeatures;
use crate::linalg::{axpy, dot, softmax, Matrix};
use crate::params::Parameters;
use crate::seed::rng_for;

/// Single-head attention: `logit_i = uᵀ tanh(W_v v_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    /// `h × d`
    pub w_v: Matrix,
    /// length `h`
    pub u: Vec<f64>,
}

impl AttentionParams {
    pub fn zeros(h: usize, d: usize) -> Self {
        Self { w_v: Matrix::zeros(h, d), u: vec![0.0; h] }
    }

    pub fn init(h: usize, d: usize, seed: u64) -> Self {
        let mut p = Self::zeros(h, d);
        let mut rng = rng_for(seed, "attention-init");
        let a = (6.0 / (h + d) as f64).sqrt();
        p.w_v.data.iter_mut().for_each(|v| *v = rng.random_range(-a..a));
        let a = (6.0 / (h + 1) as f64).sqrt();
        p.u.iter_mut().for_each(|v| *v = rng.random_range(-a..a));
        p
    }

    pub fn hidden_dim(&self) -> usize {
        self.u.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.w_v.cols
    }
}

impl Parameters for AttentionParams {
    fn visit(&self, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        f("w_v", &[self.w_v.rows, self.w_v.cols], &self.w_v.data);
        f("u", &[self.u.len()], &self.u);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        f("w_v", &mut self.w_v.data);
        f("u", &mut self.u);
    }
}

/// Normalized attention weights, one per instance in bag order.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMap {
    pub weights: Vec<f64>,
}

impl AttentionMap {
    pub fn uniform(k: usize) -> Self {
        Self { weights: vec![1.0 / k as f64; k] }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Hidden activations and logits, kept for backpropagation.
#[derive(Debug, Clone)]
pub(crate) struct AttentionTrace {
    pub hidden: Matrix,
    pub alpha: Vec<f64>,
}

pub(crate) fn attention_trace(v: &InstanceFeatures, params: &AttentionParams) -> Result<AttentionTrace> {
    if v.rows == 0 {
        return Err(Error::EmptyBag);
    }
    if v.cols != params.feature_dim() {
        return Err(Error::DimensionMismatch(format!(
            "features have {} columns, attention expects {}",
            v.cols,
            params.feature_dim()
        )));
    }
    let h = params.hidden_dim();
    let mut hidden = Matrix::zeros(v.rows, h);
    let mut logits = Vec::with_capacity(v.rows);
    for i in 0..v.rows {
        let pre = params.w_v.matvec(v.row(i));
        let row = hidden.row_mut(i);
        for (dst, p) in row.iter_mut().zip(pre) {
            *dst = p.tanh();
        }
        logits.push(dot(row, &params.u));
    }
    Ok(AttentionTrace { hidden, alpha: softmax(&logits) })
}

/// Softmax over the per-instance attention logits.
pub fn attention_forward(v: &InstanceFeatures, params: &AttentionParams) -> Result<AttentionMap> {
    Ok(AttentionMap { weights: attention_trace(v, params)?.alpha })
}

/// `z = Σ α_i v_i`
pub fn bag_embed(v: &InstanceFeatures, alpha: &AttentionMap) -> Result<Vec<f64>> {
    if alpha.len() != v.rows {
        return Err(Error::DimensionMismatch(format!("{} weights for {} instances", alpha.len(), v.rows)));
    }
    let mut z = vec![0.0; v.cols];
    for (i, &a) in alpha.weights.iter().enumerate() {
        axpy(a, v.row(i), &mut z);
    }
    Ok(z)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn singleton_and_identical_instances() {
        let p = AttentionParams::init(4, 3, 1);
        let one = Matrix::from_rows(&[vec![0.3, -0.2, 0.9]]);
        assert_eq!(attention_forward(&one, &p).unwrap().weights, vec![1.0]);
        let same = Matrix::from_rows(&vec![vec![0.3, -0.2, 0.9]; 5]);
        for a in attention_forward(&same, &p).unwrap().weights {
            assert!((a - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn logit_gap_of_one() {
        // W_v = [1] and u = 1/tanh(x), so instances [x] and [0] have logits {1, 0}.
        let x = 0.5f64;
        let p = AttentionParams { w_v: Matrix::from_rows(&[vec![1.0]]), u: vec![1.0 / x.tanh()] };
        let v = Matrix::from_rows(&[vec![x], vec![0.0]]);
        let a = attention_forward(&v, &p).unwrap().weights;
        let sigma1 = 1.0 / (1.0 + (-1.0f64).exp());
        assert!((a[0] - sigma1).abs() < 1e-12);
        assert!((a[0] - 0.7311).abs() < 1e-4);
        assert!((a[1] - 0.2689).abs() < 1e-4);
    }

    #[test]
    fn empty_bag_rejected() {
        let p = AttentionParams::zeros(2, 2);
        assert!(matches!(attention_forward(&Matrix::zeros(0, 2), &p), Err(Error::EmptyBag)));
    }

    #[test]
    fn embedding_examples() {
        let v = Matrix::from_rows(&[vec![1.0, 2.0], vec![5.0, 6.0]]);
        assert_eq!(bag_embed(&v, &AttentionMap { weights: vec![1.0, 0.0] }).unwrap(), vec![1.0, 2.0]);
        let v = Matrix::from_rows(&[vec![0.0; 3], vec![4.0; 3]]);
        assert_eq!(bag_embed(&v, &AttentionMap { weights: vec![0.25, 0.75] }).unwrap(), vec![3.0; 3]);
        let v = Matrix::from_rows(&vec![vec![2.5, -1.0]; 4]);
        assert_eq!(bag_embed(&v, &AttentionMap::uniform(4)).unwrap(), vec![2.5, -1.0]);
    }
}
