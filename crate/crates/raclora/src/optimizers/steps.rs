//! Single-block step functions for the chained methods.
//!
//! Each step function advances a [`ChainState`] by one block and returns the
//! record measured at the block's *starting* iterate. The closed-form inner
//! solve and the projected update are public on their own so tests can check
//! that merging the solved factor and taking a projected gradient step are
//! the same operation.

use crate::error::{Error, Result};
use crate::linalg::{frobenius_inner, pseudo_inverse_default, DenseMatrix};
use crate::objectives::{sample_variance, Objective};
use crate::rng::RandomStream;
use crate::sketch::{build_projector, sample_sketch, Projector, SketchSide};

use super::{measure_with_grad, ChainConfig, ChainState, InnerSolver, TraceRecord};

/// Closed-form solution of the linearized block subproblem.
///
/// For a left sketch `B` (frozen factor), the trainable factor that makes
/// the merged update a projected gradient step is
/// `A_hat = -eta (B^T B)^+ B^T G`, where `G` is the gradient at the anchor.
/// Merging then gives `W + (alpha/r) B A_hat = W - gamma H_B G` with
/// `gamma = (alpha/r) eta`. The right-sketch form is symmetric:
/// `B_hat = -eta G A^T (A A^T)^+`.
pub fn solve_subproblem_closed_form(
    sketch: &DenseMatrix,
    grad: &DenseMatrix,
    eta: f64,
    side: SketchSide,
) -> Result<DenseMatrix> {
    if !(eta.is_finite() && eta > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "inner step size must be positive and finite, got {eta}"
        )));
    }
    match side {
        SketchSide::Left => {
            if sketch.rows() != grad.rows() {
                return Err(Error::Shape(format!(
                    "left sketch has {} rows, gradient has {}",
                    sketch.rows(),
                    grad.rows()
                )));
            }
            let gram = sketch.transpose().matmul(sketch);
            let pinv = pseudo_inverse_default(&gram)?;
            Ok(pinv.matmul(&sketch.transpose().matmul(grad)).scale(-eta))
        }
        SketchSide::Right => {
            if sketch.cols() != grad.cols() {
                return Err(Error::Shape(format!(
                    "right sketch has {} columns, gradient has {}",
                    sketch.cols(),
                    grad.cols()
                )));
            }
            let gram = sketch.matmul(&sketch.transpose());
            let pinv = pseudo_inverse_default(&gram)?;
            Ok(grad.matmul(&sketch.transpose()).matmul(&pinv).scale(-eta))
        }
    }
}

/// One projected gradient step `W - gamma * H G` (or plain `W - gamma G`
/// when no projector is given). Returns the next iterate and the inner
/// product `<G, H G>` that the descent inequality is stated in.
pub fn projected_update(
    w: &DenseMatrix,
    gamma: f64,
    proj: Option<&Projector>,
    side: SketchSide,
    grad: &DenseMatrix,
) -> (DenseMatrix, f64) {
    let direction = match proj {
        Some(p) => p.apply(side, grad),
        None => grad.clone(),
    };
    let h_inner = frobenius_inner(grad, &direction).expect("direction shares the gradient shape");
    (w.add_scaled(-gamma, &direction), h_inner)
}

fn advance(state: &mut ChainState, w_next: DenseMatrix, rec: &TraceRecord) -> Result<()> {
    if !w_next.is_all_finite() {
        return Err(Error::Divergence {
            step: rec.step,
            f_value: rec.f,
        });
    }
    state.w = w_next;
    state.t += 1;
    Ok(())
}

/// One chain block with the exact one-step inner solve: sample a sketch,
/// project the gradient, step.
pub fn rac_gd_step(
    state: &mut ChainState,
    obj: &dyn Objective,
    cfg: &ChainConfig,
) -> Result<TraceRecord> {
    let (mut rec, grad) = measure_with_grad(obj, &state.w, state.t, cfg.seed, cfg.method.tag());
    let sketch = sample_sketch(&cfg.sketch, &mut state.rng)?;
    let proj = build_projector(&sketch, cfg.sketch.side)?;
    let (w_next, h_inner) =
        projected_update(&state.w, cfg.step_gamma, Some(&proj), cfg.sketch.side, &grad);
    rec.h_grad_inner = Some(h_inner);
    advance(state, w_next, &rec)?;
    Ok(rec)
}

/// The permutation used by block `block` of the run seeded `seed`, for the
/// pass run by client `client` (0 for non-federated chains). Derived from
/// the seed rather than drawn from the chain's stream, so a federated run
/// with one client consumes randomness exactly like the plain chain.
pub fn rr_permutation(seed: u64, block: usize, client: u64, n: usize) -> Vec<usize> {
    RandomStream::derive(seed, block as u64, client).permutation(n)
}

/// One pass of sequential sampled steps `W_{i+1} = W_i - gamma H grad
/// f_{order[i]}(W_i)` under a projector frozen for the pass. Stops early on
/// a non-finite iterate; the caller turns that into a divergence error.
pub(crate) fn rr_pass(
    obj: &dyn Objective,
    w0: &DenseMatrix,
    proj: Option<&Projector>,
    side: SketchSide,
    gamma: f64,
    order: &[usize],
) -> DenseMatrix {
    let mut w = w0.clone();
    for &i in order {
        let g = obj.sample_gradient(&w, i);
        let (w_next, _) = projected_update(&w, gamma, proj, side, &g);
        w = w_next;
        if !w.is_all_finite() {
            break;
        }
    }
    w
}

/// One chain block whose inner solver is a single without-replacement pass
/// over the finite sum, all under one frozen sketch.
pub fn rac_rr_epoch(
    state: &mut ChainState,
    obj: &dyn Objective,
    cfg: &ChainConfig,
) -> Result<TraceRecord> {
    let (rec, _grad) = measure_with_grad(obj, &state.w, state.t, cfg.seed, cfg.method.tag());
    let sketch = sample_sketch(&cfg.sketch, &mut state.rng)?;
    let proj = build_projector(&sketch, cfg.sketch.side)?;
    let order = rr_permutation(cfg.seed, state.t, 0, obj.sample_count());
    let w_next = rr_pass(
        obj,
        &state.w,
        Some(&proj),
        cfg.sketch.side,
        cfg.step_gamma,
        &order,
    );
    advance(state, w_next, &rec)?;
    Ok(rec)
}

/// Stochastic gradient estimator used inside an sgd block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientSampler {
    /// The exact gradient. Consumes no randomness, so an sgd block with this
    /// sampler and one step reproduces the gd block bitwise.
    FullGradient,
    /// Average of `batch >= 1` per-sample gradients drawn uniformly with
    /// replacement.
    UniformSingle { batch: usize },
}

impl GradientSampler {
    pub fn draw(
        &self,
        obj: &dyn Objective,
        w: &DenseMatrix,
        rng: &mut RandomStream,
    ) -> DenseMatrix {
        match *self {
            GradientSampler::FullGradient => obj.gradient(w),
            GradientSampler::UniformSingle { batch } => {
                assert!(batch >= 1, "sgd batch must be at least 1");
                let n = obj.sample_count();
                let mut acc = obj.sample_gradient(w, rng.uniform_index(n));
                for _ in 1..batch {
                    acc = acc.add(&obj.sample_gradient(w, rng.uniform_index(n)));
                }
                acc.scale(1.0 / batch as f64)
            }
        }
    }
}

/// One chain block running `steps` stochastic gradient steps under a sketch
/// frozen for the block.
pub fn rac_sgd_step(
    state: &mut ChainState,
    obj: &dyn Objective,
    cfg: &ChainConfig,
) -> Result<TraceRecord> {
    let InnerSolver::Sgd { sampler, steps } = cfg.inner else {
        return Err(Error::InvalidConfig(
            "rac_sgd_step requires an sgd inner solver".into(),
        ));
    };
    let (mut rec, _grad) = measure_with_grad(obj, &state.w, state.t, cfg.seed, cfg.method.tag());
    let sketch = sample_sketch(&cfg.sketch, &mut state.rng)?;
    let proj = build_projector(&sketch, cfg.sketch.side)?;
    let mut w = state.w.clone();
    let mut first_inner = None;
    for k in 0..steps {
        let g = sampler.draw(obj, &w, &mut state.rng);
        let (w_next, h_inner) =
            projected_update(&w, cfg.step_gamma, Some(&proj), cfg.sketch.side, &g);
        if k == 0 {
            first_inner = Some(h_inner);
        }
        w = w_next;
        if !w.is_all_finite() {
            return Err(Error::Divergence {
                step: rec.step,
                f_value: rec.f,
            });
        }
    }
    if sampler == GradientSampler::FullGradient {
        // With the exact gradient every inner step descends, so the first
        // step's inner product is a valid (under)estimate for the whole
        // block and the descent check applies between block records.
        rec.h_grad_inner = first_inner;
    }
    state.w = w;
    state.t += 1;
    Ok(rec)
}

/// One step of full-parameter gradient descent.
pub(crate) fn full_gd_step(
    state: &mut ChainState,
    obj: &dyn Objective,
    cfg: &ChainConfig,
) -> Result<TraceRecord> {
    let (mut rec, grad) = measure_with_grad(obj, &state.w, state.t, cfg.seed, cfg.method.tag());
    let (w_next, h_inner) = projected_update(&state.w, cfg.step_gamma, None, cfg.sketch.side, &grad);
    rec.h_grad_inner = Some(h_inner);
    advance(state, w_next, &rec)?;
    Ok(rec)
}

/// One projected step under a projector frozen for the whole run.
pub(crate) fn frozen_projector_step(
    state: &mut ChainState,
    obj: &dyn Objective,
    cfg: &ChainConfig,
    proj: &Projector,
) -> Result<TraceRecord> {
    let (mut rec, grad) = measure_with_grad(obj, &state.w, state.t, cfg.seed, cfg.method.tag());
    let (w_next, h_inner) =
        projected_update(&state.w, cfg.step_gamma, Some(proj), cfg.sketch.side, &grad);
    rec.h_grad_inner = Some(h_inner);
    advance(state, w_next, &rec)?;
    Ok(rec)
}

/// Expected-smoothness constants `(A1, B1, C1)` of a gradient estimator at a
/// point: `E |g|^2 <= 2 A1 (f - f*) + B1 |grad f|^2 + C1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbcConstants {
    pub a1: f64,
    pub b1: f64,
    pub c1: f64,
}

impl AbcConstants {
    /// The exact gradient satisfies the bound with `(0, 1, 0)`.
    pub fn full_gradient() -> Self {
        AbcConstants {
            a1: 0.0,
            b1: 1.0,
            c1: 0.0,
        }
    }

    /// Empirical constants of the uniform single-sample estimator measured
    /// at `w`: `E |g|^2 = |grad f|^2 + variance`, so `B1 = 1` and `C1` is
    /// the measured gradient variance. An objective with one sample gives
    /// back exactly `(0, 1, 0)`.
    pub fn estimate_uniform_single(obj: &dyn Objective, w: &DenseMatrix) -> Self {
        AbcConstants {
            a1: 0.0,
            b1: 1.0,
            c1: sample_variance(obj, w),
        }
    }

    /// Step-size ceiling for `t` sgd blocks:
    /// `min(1 / sqrt(L A1 lmax t), lmin / (L B1 lmax))`, where `lmin` and
    /// `lmax` bound the expected projector spectrum. Terms with a zero
    /// constant drop out.
    pub fn sgd_step_bound(&self, l: f64, lambda_min_h: f64, lambda_max_h: f64, t: usize) -> f64 {
        let curvature = if self.a1 > 0.0 {
            1.0 / (l * self.a1 * lambda_max_h * t as f64).sqrt()
        } else {
            f64::INFINITY
        };
        let drift = if self.b1 > 0.0 {
            lambda_min_h / (l * self.b1 * lambda_max_h)
        } else {
            f64::INFINITY
        };
        curvature.min(drift)
    }
}
