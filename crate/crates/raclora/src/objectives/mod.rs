//! Convex test objectives with known constants.
//!
//! All objectives share two conventions. Finite sums are averaged, never
//! summed: `f(W) = (1/N) sum_i f_i(W)`. Regularization enters as
//! `lambda * |vec(W)|^2` with no 1/2 in front, and the constants exposed by
//! `smoothness_l` / `pl_mu` account for that.
//!
//! Parameters are matrices. An objective that is most naturally written over
//! a vector treats `vec(W)` as its argument, where `vec` flattens row-major.

mod average;
mod quadratic;
mod regression;

pub use average::AverageObjective;
pub use quadratic::{counterexample, make_quadratic, QuadraticObjective, QuadraticSpec};
pub use regression::{
    make_linear_regression, make_logistic_regression, LinearRegressionObjective,
    LogisticRegressionObjective, RegressionSpec,
};

use nalgebra::DVector;

use crate::linalg::DenseMatrix;

/// Differentiable finite-sum objective over a matrix parameter.
///
/// `gradient` must equal the average of the `sample_gradient`s; the test
/// suite holds every implementation to that at 1e-10 relative accuracy.
pub trait Objective: Send + Sync {
    /// Shape of the parameter matrix `W`.
    fn param_shape(&self) -> (usize, usize);

    /// Number of terms in the finite sum.
    fn sample_count(&self) -> usize;

    fn value(&self, w: &DenseMatrix) -> f64;

    fn gradient(&self, w: &DenseMatrix) -> DenseMatrix;

    /// Gradient of the single term `f_i`.
    fn sample_gradient(&self, w: &DenseMatrix, i: usize) -> DenseMatrix;

    /// Smoothness constant `L` of the full objective, when known.
    fn smoothness_l(&self) -> Option<f64> {
        None
    }

    /// Polyak-Lojasiewicz constant `mu`, when known.
    fn pl_mu(&self) -> Option<f64> {
        None
    }

    /// Infimum `f*`, when available in closed form.
    fn optimum_value(&self) -> Option<f64> {
        None
    }

    /// Infimum of the single term `f_i`, when available in closed form.
    fn sample_optimum_value(&self, _i: usize) -> Option<f64> {
        None
    }

    /// Short tag used in trace files and summaries.
    fn name(&self) -> &str;
}

/// Row-major flattening `vec(W)`.
pub(crate) fn flatten(w: &DenseMatrix) -> DVector<f64> {
    DVector::from_vec(w.to_row_major_vec())
}

/// Inverse of [`flatten`]. Does not validate finiteness: gradients of a
/// diverging iterate must be allowed to carry Inf/NaN into the divergence
/// checks.
pub(crate) fn unflatten(rows: usize, cols: usize, v: &DVector<f64>) -> DenseMatrix {
    DenseMatrix::from_inner(nalgebra::DMatrix::from_row_slice(rows, cols, v.as_slice()))
}

/// Empirical variance of the per-sample gradients at `w`:
/// `(1/N) sum_i |grad f_i(w) - grad f(w)|_F^2`.
pub fn sample_variance(obj: &dyn Objective, w: &DenseMatrix) -> f64 {
    let full = obj.gradient(w);
    let n = obj.sample_count();
    let mut acc = 0.0;
    for i in 0..n {
        acc += obj.sample_gradient(w, i).sub(&full).frobenius_norm_sq();
    }
    acc / n as f64
}

/// Central-difference gradient with step `h`, used to cross-check analytic
/// gradients. Cost is two objective evaluations per parameter entry.
pub fn finite_difference_gradient(obj: &dyn Objective, w: &DenseMatrix, h: f64) -> DenseMatrix {
    let (rows, cols) = w.shape();
    let base = w.to_row_major_vec();
    let mut out = vec![0.0; rows * cols];
    for k in 0..base.len() {
        let mut plus = base.clone();
        let mut minus = base.clone();
        plus[k] += h;
        minus[k] -= h;
        let wp = DenseMatrix::from_row_major(rows, cols, &plus).expect("finite perturbation");
        let wm = DenseMatrix::from_row_major(rows, cols, &minus).expect("finite perturbation");
        out[k] = (obj.value(&wp) - obj.value(&wm)) / (2.0 * h);
    }
    DenseMatrix::from_row_major(rows, cols, &out).expect("finite difference quotients")
}
