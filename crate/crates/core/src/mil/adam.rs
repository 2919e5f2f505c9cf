use serde::{Deserialize, Serialize};

use crate::params::Parameters;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment accumulators, one flat buffer per tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl AdamState {
    pub fn new<P: Parameters>(params: &P) -> Self {
        let mut m = Vec::new();
        params.visit(&mut |_, _, d| m.push(vec![0.0; d.len()]));
        Self { v: m.clone(), m, t: 0 }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step<P: Parameters>(params: &mut P, grads: &P, state: &mut AdamState, lr: f64, cfg: &AdamConfig) {
    let mut gs: Vec<Vec<f64>> = Vec::new();
    grads.visit(&mut |_, _, d| gs.push(d.to_vec()));
    state.t += 1;
    let bc1 = 1.0 - cfg.beta1.powi(state.t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(state.t as i32);
    let mut idx = 0;
    params.visit_mut(&mut |_, p| {
        let (m, v, g) = (&mut state.m[idx], &mut state.v[idx], &gs[idx]);
        for j in 0..p.len() {
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            p[j] -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
        idx += 1;
    });
}
