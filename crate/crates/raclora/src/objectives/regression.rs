//! Ridge-regularized linear and logistic regression over `vec(W)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, DenseMatrix};

use super::{flatten, unflatten, Objective};

/// Shared problem data: design matrix `X` (one sample per row), targets `y`,
/// ridge weight, and the matrix shape the flat parameter unfolds to.
#[derive(Debug, Clone)]
pub struct RegressionSpec {
    pub x: DenseMatrix,
    pub y: Vec<f64>,
    pub reg_lambda: f64,
    pub reshape: (usize, usize),
}

impl RegressionSpec {
    fn validate(&self) -> Result<()> {
        let (n, d) = self.x.shape();
        if n == 0 || d == 0 {
            return Err(Error::InvalidSpec("empty design matrix".into()));
        }
        if self.y.len() != n {
            return Err(Error::InvalidSpec(format!(
                "{} targets for {n} samples",
                self.y.len()
            )));
        }
        if self.y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec("non-finite target".into()));
        }
        if self.reshape.0 * self.reshape.1 != d {
            return Err(Error::InvalidSpec(format!(
                "reshape {:?} does not cover feature dimension {d}",
                self.reshape
            )));
        }
        if !(self.reg_lambda.is_finite() && self.reg_lambda >= 0.0) {
            return Err(Error::InvalidSpec(format!(
                "regularization weight must be non-negative, got {}",
                self.reg_lambda
            )));
        }
        Ok(())
    }
}

/// `f(w) = (1/N) |X w - y|^2 + lambda |w|^2`.
#[derive(Debug, Clone)]
pub struct LinearRegressionObjective {
    x: DMatrix<f64>,
    y: DVector<f64>,
    lambda: f64,
    reshape: (usize, usize),
    l: f64,
    mu: f64,
    fstar: Option<f64>,
    wstar: Option<DVector<f64>>,
}

impl LinearRegressionObjective {
    /// Minimizer from the normal equations, as a parameter matrix, when the
    /// regularized system was solvable.
    pub fn minimizer(&self) -> Option<DenseMatrix> {
        self.wstar
            .as_ref()
            .map(|w| unflatten(self.reshape.0, self.reshape.1, w))
    }
}

pub fn make_linear_regression(spec: RegressionSpec) -> Result<LinearRegressionObjective> {
    spec.validate()?;
    let (n, d) = spec.x.shape();
    let nf = n as f64;
    let x = spec.x.inner().clone();
    let y = DVector::from_vec(spec.y.clone());

    // L and mu come from the extreme singular values of X: the Hessian is
    // 2 X^T X / N + 2 lambda I.
    let svd = x.clone().svd(false, false);
    let smax = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let smin_d = if n >= d {
        svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min)
    } else {
        0.0
    };
    let l = 2.0 * smax * smax / nf + 2.0 * spec.reg_lambda;
    let mu = 2.0 * smin_d * smin_d / nf + 2.0 * spec.reg_lambda;

    // Normal equations (X^T X / N + lambda I) w = X^T y / N.
    let mut gram = x.transpose() * &x / nf;
    for i in 0..d {
        gram[(i, i)] += spec.reg_lambda;
    }
    let rhs = x.transpose() * &y / nf;
    let wstar = linalg::solve_spd(
        &DenseMatrix::from_inner(gram),
        &DenseMatrix::from_inner(DMatrix::from_column_slice(d, 1, rhs.as_slice())),
    )
    .ok()
    .map(|sol| DVector::from_vec(sol.to_row_major_vec()));

    let mut obj = LinearRegressionObjective {
        x,
        y,
        lambda: spec.reg_lambda,
        reshape: spec.reshape,
        l,
        mu,
        fstar: None,
        wstar,
    };
    obj.fstar = obj.wstar.clone().map(|w| {
        let wm = unflatten(obj.reshape.0, obj.reshape.1, &w);
        obj.value(&wm)
    });
    Ok(obj)
}

impl Objective for LinearRegressionObjective {
    fn param_shape(&self) -> (usize, usize) {
        self.reshape
    }

    fn sample_count(&self) -> usize {
        self.x.nrows()
    }

    fn value(&self, w: &DenseMatrix) -> f64 {
        let v = flatten(w);
        let r = &self.x * &v - &self.y;
        r.norm_squared() / self.x.nrows() as f64 + self.lambda * v.norm_squared()
    }

    fn gradient(&self, w: &DenseMatrix) -> DenseMatrix {
        let v = flatten(w);
        let r = &self.x * &v - &self.y;
        let g = self.x.transpose() * r * (2.0 / self.x.nrows() as f64) + &v * (2.0 * self.lambda);
        unflatten(self.reshape.0, self.reshape.1, &g)
    }

    fn sample_gradient(&self, w: &DenseMatrix, i: usize) -> DenseMatrix {
        assert!(i < self.x.nrows(), "sample index {i} out of range");
        let v = flatten(w);
        let xi = self.x.row(i).transpose();
        let resid = xi.dot(&v) - self.y[i];
        let g = xi * (2.0 * resid) + &v * (2.0 * self.lambda);
        unflatten(self.reshape.0, self.reshape.1, &g)
    }

    fn smoothness_l(&self) -> Option<f64> {
        Some(self.l)
    }

    fn pl_mu(&self) -> Option<f64> {
        if self.mu > 0.0 { Some(self.mu) } else { None }
    }

    fn optimum_value(&self) -> Option<f64> {
        self.fstar
    }

    /// The single-sample problem `(x_i^T w - y_i)^2 + lambda |w|^2` has the
    /// closed-form infimum `lambda y_i^2 / (lambda + |x_i|^2)`.
    fn sample_optimum_value(&self, i: usize) -> Option<f64> {
        assert!(i < self.x.nrows(), "sample index {i} out of range");
        let s = self.x.row(i).norm_squared();
        if self.lambda == 0.0 {
            return Some(0.0);
        }
        Some(self.lambda * self.y[i] * self.y[i] / (self.lambda + s))
    }

    fn name(&self) -> &str {
        "linreg"
    }
}

/// `f(w) = (1/N) sum_i log(1 + exp(-y_i x_i^T w)) + lambda |w|^2` with
/// labels in {-1, +1}.
#[derive(Debug, Clone)]
pub struct LogisticRegressionObjective {
    x: DMatrix<f64>,
    y: DVector<f64>,
    lambda: f64,
    reshape: (usize, usize),
    l: f64,
}

pub fn make_logistic_regression(spec: RegressionSpec) -> Result<LogisticRegressionObjective> {
    spec.validate()?;
    if let Some(bad) = spec.y.iter().find(|&&v| v != 1.0 && v != -1.0) {
        return Err(Error::InvalidSpec(format!(
            "logistic labels must be -1 or +1, found {bad}"
        )));
    }
    let (n, _) = spec.x.shape();
    let x = spec.x.inner().clone();
    let svd = x.clone().svd(false, false);
    let smax = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    // The logistic loss curvature is at most 1/4, so
    // L = sigma_max(X^T X) / (4N) + 2 lambda.
    let l = smax * smax / (4.0 * n as f64) + 2.0 * spec.reg_lambda;
    Ok(LogisticRegressionObjective {
        x,
        y: DVector::from_vec(spec.y),
        lambda: spec.reg_lambda,
        reshape: spec.reshape,
        l,
    })
}

/// `log(1 + exp(u))` without overflow for large `|u|`.
fn log1p_exp(u: f64) -> f64 {
    if u > 0.0 {
        u + (-u).exp().ln_1p()
    } else {
        u.exp().ln_1p()
    }
}

/// Logistic sigmoid, evaluated from the side that avoids overflow.
fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

impl LogisticRegressionObjective {
    fn margins(&self, v: &DVector<f64>) -> DVector<f64> {
        let z = &self.x * v;
        DVector::from_iterator(z.len(), z.iter().zip(self.y.iter()).map(|(zi, yi)| yi * zi))
    }
}

impl Objective for LogisticRegressionObjective {
    fn param_shape(&self) -> (usize, usize) {
        self.reshape
    }

    fn sample_count(&self) -> usize {
        self.x.nrows()
    }

    fn value(&self, w: &DenseMatrix) -> f64 {
        let v = flatten(w);
        let margins = self.margins(&v);
        let loss: f64 = margins.iter().map(|&m| log1p_exp(-m)).sum();
        loss / self.x.nrows() as f64 + self.lambda * v.norm_squared()
    }

    fn gradient(&self, w: &DenseMatrix) -> DenseMatrix {
        let v = flatten(w);
        let margins = self.margins(&v);
        // d/dw log(1+exp(-y x^T w)) = -y sigmoid(-y x^T w) x.
        let coeffs = DVector::from_iterator(
            margins.len(),
            margins
                .iter()
                .zip(self.y.iter())
                .map(|(&m, &yi)| -yi * sigmoid(-m)),
        );
        let g = self.x.transpose() * coeffs / self.x.nrows() as f64 + &v * (2.0 * self.lambda);
        unflatten(self.reshape.0, self.reshape.1, &g)
    }

    fn sample_gradient(&self, w: &DenseMatrix, i: usize) -> DenseMatrix {
        assert!(i < self.x.nrows(), "sample index {i} out of range");
        let v = flatten(w);
        let xi = self.x.row(i).transpose();
        let margin = self.y[i] * xi.dot(&v);
        let g = xi * (-self.y[i] * sigmoid(-margin)) + &v * (2.0 * self.lambda);
        unflatten(self.reshape.0, self.reshape.1, &g)
    }

    fn smoothness_l(&self) -> Option<f64> {
        Some(self.l)
    }

    fn pl_mu(&self) -> Option<f64> {
        if self.lambda > 0.0 {
            Some(2.0 * self.lambda)
        } else {
            None
        }
    }

    /// The single-sample infimum is attained along `w = c y_i x_i`; the
    /// scalar problem `log(1+exp(-c s)) + lambda c^2 s` with `s = |x_i|^2`
    /// is solved here by bisection on its derivative.
    fn sample_optimum_value(&self, i: usize) -> Option<f64> {
        assert!(i < self.x.nrows(), "sample index {i} out of range");
        let s = self.x.row(i).norm_squared();
        if s == 0.0 {
            return Some(std::f64::consts::LN_2);
        }
        if self.lambda == 0.0 {
            return Some(0.0);
        }
        // g'(c) = s (2 lambda c - sigmoid(-c s)); the root lies in
        // (0, 1/(2 lambda)).
        let mut lo = 0.0;
        let mut hi = 1.0 / (2.0 * self.lambda);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if 2.0 * self.lambda * mid - sigmoid(-mid * s) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let c = 0.5 * (lo + hi);
        Some(log1p_exp(-c * s) + self.lambda * c * c * s)
    }

    fn name(&self) -> &str {
        "logreg"
    }
}
