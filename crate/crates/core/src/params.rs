//! Shared plumbing for trainable parameter sets: a visitor over named flat
//! tensors, used by the optimizer and checkpoint serialization.

use crate::error::Result;
use crate::tensor_io::NamedTensor;

pub trait Parameters {
    /// Visits every tensor in a fixed order.
    fn visit(&self, f: &mut dyn FnMut(&str, &[usize], &[f64]));

    /// Visits every tensor mutably, in the same order as [`Parameters::visit`].
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64]));

    fn to_tensors(&self, prefix: &str) -> Vec<NamedTensor> {
        let mut out = Vec::new();
        self.visit(&mut |name, shape, data| {
            out.push(NamedTensor::new(format!("{prefix}{name}"), shape.to_vec(), data.to_vec()));
        });
        out
    }

    fn num_scalars(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, _, d| n += d.len());
        n
    }

    fn all_finite(&self) -> bool {
        let mut ok = true;
        self.visit(&mut |_, _, d| ok &= d.iter().all(|v| v.is_finite()));
        ok
    }

    fn scale(&mut self, factor: f64) {
        self.visit_mut(&mut |_, d| d.iter_mut().for_each(|v| *v *= factor));
    }

    fn fill(&mut self, value: f64) {
        self.visit_mut(&mut |_, d| d.iter_mut().for_each(|v| *v = value));
    }

    /// `self += other`, tensor by tensor.
    fn add_assign(&mut self, other: &Self)
    where
        Self: Sized,
    {
        let mut src = Vec::new();
        other.visit(&mut |_, _, d| src.push(d.to_vec()));
        let mut i = 0;
        self.visit_mut(&mut |_, d| {
            for (a, b) in d.iter_mut().zip(&src[i]) {
                *a += b;
            }
            i += 1;
        });
    }

    /// Overwrites tensors from a checkpoint, matching names under `prefix`.
    fn load_tensors(&mut self, tensors: &[NamedTensor], prefix: &str) -> Result<()> {
        let mut shapes = Vec::new();
        self.visit(&mut |name, shape, _| shapes.push((name.to_string(), shape.to_vec())));
        let mut found = Vec::new();
        for (name, shape) in &shapes {
            found.push(crate::tensor_io::take(tensors, &format!("{prefix}{name}"), shape)?.data.clone());
        }
        let mut i = 0;
        self.visit_mut(&mut |_, d| {
            d.copy_from_slice(&found[i]);
            i += 1;
        });
        Ok(())
    }
}
