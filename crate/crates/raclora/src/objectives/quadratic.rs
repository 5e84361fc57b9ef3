//! Strongly convex quadratic `f(x) = x^T M x + b^T x` over `x = vec(W)`.
//!
//! Everything about this objective is available in closed form, which makes
//! it the reference problem for rate checks: `L = 2 lambda_max(M)`,
//! `mu = 2 lambda_min(M)`, minimizer `x* = -(1/2) M^{-1} b`, and
//! `f* = -(1/4) b^T M^{-1} b`.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::{self, DenseMatrix};

use super::{flatten, unflatten, Objective};

/// Problem data for [`make_quadratic`].
#[derive(Debug, Clone)]
pub struct QuadraticSpec {
    /// Symmetric positive definite `d x d` matrix.
    pub m: DenseMatrix,
    /// Linear term, length `d`.
    pub b: Vec<f64>,
    /// Shape `(rows, cols)` with `rows * cols = d` that `vec` unflattens to.
    pub reshape: (usize, usize),
}

#[derive(Debug, Clone)]
pub struct QuadraticObjective {
    m: DenseMatrix,
    b: DVector<f64>,
    reshape: (usize, usize),
    l: f64,
    mu: f64,
    fstar: f64,
    xstar: DVector<f64>,
}

impl QuadraticObjective {
    /// Minimizer as a parameter matrix.
    pub fn minimizer(&self) -> DenseMatrix {
        unflatten(self.reshape.0, self.reshape.1, &self.xstar)
    }
}

/// Validates the inputs and precomputes the closed-form constants.
pub fn make_quadratic(spec: QuadraticSpec) -> Result<QuadraticObjective> {
    let d = spec.m.rows();
    if spec.m.cols() != d {
        return Err(Error::InvalidSpec(format!(
            "quadratic matrix must be square, got {:?}",
            spec.m.shape()
        )));
    }
    if spec.b.len() != d {
        return Err(Error::InvalidSpec(format!(
            "linear term has length {}, expected {d}",
            spec.b.len()
        )));
    }
    if spec.reshape.0 * spec.reshape.1 != d {
        return Err(Error::InvalidSpec(format!(
            "reshape {:?} does not cover dimension {d}",
            spec.reshape
        )));
    }
    let (lo, hi) = linalg::sym_eig_extremes(&spec.m)?;
    if lo <= 0.0 {
        return Err(Error::InvalidSpec(format!(
            "quadratic matrix must be positive definite, smallest eigenvalue {lo}"
        )));
    }
    if spec.b.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidSpec("linear term has non-finite entries".into()));
    }
    let b = DVector::from_vec(spec.b.clone());
    // M x* = -b/2.
    let rhs = DenseMatrix::column(&spec.b)?.scale(-0.5);
    let xstar_mat = linalg::solve_spd(&spec.m, &rhs)?;
    let xstar = DVector::from_vec(xstar_mat.to_row_major_vec());
    let fstar = 0.5 * b.dot(&xstar);
    Ok(QuadraticObjective {
        m: spec.m,
        b,
        reshape: spec.reshape,
        l: 2.0 * hi,
        mu: 2.0 * lo,
        fstar,
        xstar,
    })
}

/// The 9-dimensional divergence example: `M = diag(10, 1, ..., 1)`, `b` all
/// ones, parameters reshaped to 3x3. Its curvature gap (10 against 1) is what
/// trips jointly trained factor methods at the full-model step size, while
/// chained sketch updates keep descending.
pub fn counterexample() -> QuadraticObjective {
    let mut diag = vec![1.0; 9];
    diag[0] = 10.0;
    let spec = QuadraticSpec {
        m: DenseMatrix::from_diagonal(&diag).expect("finite diagonal"),
        b: vec![1.0; 9],
        reshape: (3, 3),
    };
    make_quadratic(spec).expect("counterexample spec is valid")
}

impl Objective for QuadraticObjective {
    fn param_shape(&self) -> (usize, usize) {
        self.reshape
    }

    fn sample_count(&self) -> usize {
        1
    }

    fn value(&self, w: &DenseMatrix) -> f64 {
        let x = flatten(w);
        let mx = self.m.inner() * &x;
        x.dot(&mx) + self.b.dot(&x)
    }

    fn gradient(&self, w: &DenseMatrix) -> DenseMatrix {
        let x = flatten(w);
        let g = self.m.inner() * &x * 2.0 + &self.b;
        unflatten(self.reshape.0, self.reshape.1, &g)
    }

    fn sample_gradient(&self, w: &DenseMatrix, i: usize) -> DenseMatrix {
        assert_eq!(i, 0, "quadratic objective has a single sample");
        self.gradient(w)
    }

    fn smoothness_l(&self) -> Option<f64> {
        Some(self.l)
    }

    fn pl_mu(&self) -> Option<f64> {
        Some(self.mu)
    }

    fn optimum_value(&self) -> Option<f64> {
        Some(self.fstar)
    }

    fn sample_optimum_value(&self, i: usize) -> Option<f64> {
        assert_eq!(i, 0, "quadratic objective has a single sample");
        Some(self.fstar)
    }

    fn name(&self) -> &str {
        "quadratic"
    }
}
