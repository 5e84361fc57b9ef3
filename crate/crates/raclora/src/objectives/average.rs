//! Uniform average of several objectives, used as the global objective in
//! federated runs: `f(W) = (1/M) sum_m f_m(W)`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

use super::Objective;

/// Average of `M` component objectives over a shared parameter shape.
///
/// The finite-sum view flattens the double sum: global sample `k` maps to
/// component `k / N` and local sample `k % N`, which requires every
/// component to hold the same number of samples.
pub struct AverageObjective {
    parts: Vec<Arc<dyn Objective>>,
    shape: (usize, usize),
    per_part: usize,
}

impl AverageObjective {
    pub fn new(parts: Vec<Arc<dyn Objective>>) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::InvalidConfig("average of zero objectives".into()));
        }
        let shape = parts[0].param_shape();
        let per_part = parts[0].sample_count();
        for (i, p) in parts.iter().enumerate() {
            if p.param_shape() != shape {
                return Err(Error::InvalidConfig(format!(
                    "component {i} has shape {:?}, expected {:?}",
                    p.param_shape(),
                    shape
                )));
            }
            if p.sample_count() != per_part {
                return Err(Error::InvalidConfig(format!(
                    "component {i} has {} samples, expected {per_part}",
                    p.sample_count()
                )));
            }
        }
        Ok(AverageObjective { parts, shape, per_part })
    }

    pub fn component_count(&self) -> usize {
        self.parts.len()
    }
}

impl Objective for AverageObjective {
    fn param_shape(&self) -> (usize, usize) {
        self.shape
    }

    fn sample_count(&self) -> usize {
        self.parts.len() * self.per_part
    }

    fn value(&self, w: &DenseMatrix) -> f64 {
        let sum: f64 = self.parts.iter().map(|p| p.value(w)).sum();
        sum / self.parts.len() as f64
    }

    fn gradient(&self, w: &DenseMatrix) -> DenseMatrix {
        let mut acc = DenseMatrix::zeros(self.shape.0, self.shape.1);
        for p in &self.parts {
            acc = acc.add(&p.gradient(w));
        }
        acc.scale(1.0 / self.parts.len() as f64)
    }

    fn sample_gradient(&self, w: &DenseMatrix, i: usize) -> DenseMatrix {
        assert!(i < self.sample_count(), "sample index {i} out of range");
        self.parts[i / self.per_part].sample_gradient(w, i % self.per_part)
    }

    /// Average of the component constants; averaging preserves smoothness.
    fn smoothness_l(&self) -> Option<f64> {
        let mut sum = 0.0;
        for p in &self.parts {
            sum += p.smoothness_l()?;
        }
        Some(sum / self.parts.len() as f64)
    }

    /// Average of the component constants; all objectives in this crate get
    /// their PL constant from strong convexity, which averages.
    fn pl_mu(&self) -> Option<f64> {
        let mut sum = 0.0;
        for p in &self.parts {
            sum += p.pl_mu()?;
        }
        Some(sum / self.parts.len() as f64)
    }

    fn name(&self) -> &str {
        "average"
    }
}
