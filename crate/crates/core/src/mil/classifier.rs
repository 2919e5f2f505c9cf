use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{softmax, Matrix};
use crate::params::Parameters;
use crate::seed::rng_for;

/// Dense softmax classifier over the bag embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierParams {
    /// `n × d`
    pub w_c: Matrix,
    pub b_c: Vec<f64>,
}

impl ClassifierParams {
    pub fn zeros(n: usize, d: usize) -> Self {
        Self { w_c: Matrix::zeros(n, d), b_c: vec![0.0; n] }
    }

    pub fn init(n: usize, d: usize, seed: u64) -> Self {
        let mut p = Self::zeros(n, d);
        let mut rng = rng_for(seed, "classifier-init");
        let a = (6.0 / (n + d) as f64).sqrt();
        p.w_c.data.iter_mut().for_each(|v| *v = rng.random_range(-a..a));
        p
    }

    pub fn num_classes(&self) -> usize {
        self.b_c.len()
    }

    pub fn logits(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.w_c.cols {
            return Err(Error::DimensionMismatch(format!(
                "embedding has {} entries, classifier expects {}",
                z.len(),
                self.w_c.cols
            )));
        }
        let mut s = self.w_c.matvec(z);
        for (si, b) in s.iter_mut().zip(&self.b_c) {
            *si += b;
        }
        Ok(s)
    }
}

impl Parameters for ClassifierParams {
    fn visit(&self, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        f("w_c", &[self.w_c.rows, self.w_c.cols], &self.w_c.data);
        f("b_c", &[self.b_c.len()], &self.b_c);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64])) {
        f("w_c", &mut self.w_c.data);
        f("b_c", &mut self.b_c);
    }
}

/// `softmax(W_c z + b_c)`
pub fn classify(z: &[f64], params: &ClassifierParams) -> Result<Vec<f64>> {
    Ok(softmax(&params.logits(z)?))
}
