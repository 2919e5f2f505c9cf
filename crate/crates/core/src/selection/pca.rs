use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::features::InstanceFeatures;
use crate::linalg::{dot, Matrix};

/// Mean and top-`p` principal directions (rows of `basis`, orthonormal).
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    pub basis: Matrix,
    /// Eigenvalues of the covariance for the kept directions, descending.
    pub variances: Vec<f64>,
}

impl PcaModel {
    pub fn dim(&self) -> usize {
        self.basis.rows
    }

    pub fn transform_row(&self, x: &[f64]) -> Vec<f64> {
        let centered: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        (0..self.basis.rows).map(|r| dot(self.basis.row(r), &centered)).collect()
    }

    pub fn transform(&self, v: &InstanceFeatures) -> Matrix {
        let mut out = Matrix::zeros(v.rows, self.dim());
        for i in 0..v.rows {
            out.row_mut(i).copy_from_slice(&self.transform_row(v.row(i)));
        }
        out
    }

    pub fn reconstruct_row(&self, y: &[f64]) -> Vec<f64> {
        let mut x = self.mean.clone();
        for (r, &c) in y.iter().enumerate() {
            crate::linalg::axpy(c, self.basis.row(r), &mut x);
        }
        x
    }
}

/// Projects mean-centred features onto the top-`p` eigenvectors of the
/// (population) covariance. Each basis row is signed so that its
/// largest-magnitude component is positive.
pub fn pca_fit_transform(v: &InstanceFeatures, p: usize) -> Result<(PcaModel, Matrix)> {
    let (k, d) = (v.rows, v.cols);
    if k < 2 {
        return Err(Error::InsufficientInstances);
    }
    if p == 0 || p > k.min(d) {
        return Err(Error::InvalidArgument(format!("target dimension {p} for {k} points in {d} dims")));
    }
    let mut mean = vec![0.0; d];
    for i in 0..k {
        crate::linalg::axpy(1.0 / k as f64, v.row(i), &mut mean);
    }
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for i in 0..k {
        let c: Vec<f64> = v.row(i).iter().zip(&mean).map(|(a, m)| a - m).collect();
        for a in 0..d {
            if c[a] == 0.0 {
                continue;
            }
            for b in a..d {
                cov[(a, b)] += c[a] * c[b];
            }
        }
    }
    for a in 0..d {
        for b in a..d {
            let val = cov[(a, b)] / k as f64;
            cov[(a, b)] = val;
            cov[(b, a)] = val;
        }
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut basis = Matrix::zeros(p, d);
    let mut variances = Vec::with_capacity(p);
    for (r, &col) in order.iter().take(p).enumerate() {
        let vec = eig.eigenvectors.column(col);
        let mut lead = 0;
        for j in 1..d {
            if vec[j].abs() > vec[lead].abs() + 1e-12 {
                lead = j;
            }
        }
        let sign = if vec[lead] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..d {
            basis.set(r, j, sign * vec[j]);
        }
        variances.push(eig.eigenvalues[col].max(0.0));
    }
    let model = PcaModel { mean, basis, variances };
    let projected = model.transform(v);
    Ok((model, projected))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_aligned_example() {
        let v = Matrix::from_rows(&[vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 0.1], vec![0.0, -0.1]]);
        let (m, y) = pca_fit_transform(&v, 1).unwrap();
        assert!((m.basis.get(0, 0) - 1.0).abs() < 1e-12);
        assert!(m.basis.get(0, 1).abs() < 1e-12);
        assert!((m.variances[0] - 0.5).abs() < 1e-12);
        let proj: Vec<f64> = (0..4).map(|i| y.get(i, 0)).collect();
        for (a, b) in proj.iter().zip([1.0, -1.0, 0.0, 0.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn requires_two_points() {
        assert!(matches!(pca_fit_transform(&Matrix::zeros(1, 3), 1), Err(Error::InsufficientInstances)));
        assert!(pca_fit_transform(&Matrix::zeros(3, 2), 3).is_err());
    }
}
