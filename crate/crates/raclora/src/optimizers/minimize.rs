//! Deterministic reference minimizer for pinning down numeric infima.

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::objectives::Objective;

/// Runs plain gradient descent at step `1/L` from `w0` until
/// `|grad f|_F <= grad_tol`, returning the point and its value.
///
/// This exists to compute `f*` for objectives without a closed form, so it
/// refuses to return a half-converged answer: not reaching the tolerance
/// within `max_iters` is an error.
pub fn minimize_to_stationarity(
    obj: &dyn Objective,
    w0: &DenseMatrix,
    grad_tol: f64,
    max_iters: usize,
) -> Result<(DenseMatrix, f64)> {
    if !(grad_tol.is_finite() && grad_tol > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "gradient tolerance must be positive, got {grad_tol}"
        )));
    }
    let l = obj.smoothness_l().ok_or_else(|| {
        Error::Unsupported("reference minimization needs a smoothness constant".into())
    })?;
    let step = 1.0 / l;
    let mut w = w0.clone();
    for _ in 0..=max_iters {
        let g = obj.gradient(&w);
        if g.frobenius_norm() <= grad_tol {
            let f = obj.value(&w);
            return Ok((w, f));
        }
        w = w.add_scaled(-step, &g);
        if !w.is_all_finite() {
            return Err(Error::Unsupported(
                "reference minimization left the finite domain".into(),
            ));
        }
    }
    Err(Error::Unsupported(format!(
        "reference minimization did not reach |grad| <= {grad_tol} in {max_iters} iterations"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::counterexample;

    #[test]
    fn reaches_the_quadratic_optimum() {
        let obj = counterexample();
        let (w, f) = minimize_to_stationarity(&obj, &DenseMatrix::zeros(3, 3), 1e-10, 20_000)
            .unwrap();
        assert!((f - obj.optimum_value().unwrap()).abs() < 1e-12);
        assert!(w.sub(&obj.minimizer()).max_abs() < 1e-9);
    }

    #[test]
    fn refuses_an_unreachable_tolerance_budget() {
        let obj = counterexample();
        let err = minimize_to_stationarity(&obj, &DenseMatrix::zeros(3, 3), 1e-10, 3);
        assert!(matches!(err, Err(Error::Unsupported(_))));
    }

    #[test]
    fn rejects_nonpositive_tolerance() {
        let obj = counterexample();
        assert!(matches!(
            minimize_to_stationarity(&obj, &DenseMatrix::zeros(3, 3), 0.0, 10),
            Err(Error::InvalidConfig(_))
        ));
    }
}
