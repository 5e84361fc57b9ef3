//! Joint-factor baselines: both factors trained, descent through the
//! bilinear parameterization `W + (alpha/r) B A`.

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::objectives::Objective;
use crate::rng::RandomStream;

use super::{measure_with_grad, ChainConfig, ChainState, TraceRecord};

/// Factor pair of a low-rank adapter: `B` is `m x r`, `A` is `r x n`.
#[derive(Debug, Clone)]
pub struct LoraFactors {
    pub b: DenseMatrix,
    pub a: DenseMatrix,
}

impl LoraFactors {
    /// The usual adapter initialization: `A` standard Gaussian, `B` zero, so
    /// the composite starts exactly at the anchor.
    pub fn standard_init(shape: (usize, usize), rank: usize, rng: &mut RandomStream) -> Self {
        let (m, n) = shape;
        let entries: Vec<f64> = (0..rank * n).map(|_| rng.standard_normal()).collect();
        LoraFactors {
            b: DenseMatrix::zeros(m, rank),
            a: DenseMatrix::from_row_major(rank, n, &entries).expect("gaussian draws are finite"),
        }
    }

    /// The effective parameter `anchor + (alpha/rank) B A`.
    pub fn composite(&self, anchor: &DenseMatrix, alpha: f64, rank: usize) -> DenseMatrix {
        anchor.add_scaled(alpha / rank as f64, &self.b.matmul(&self.a))
    }
}

/// Simultaneous gradient step on both factors:
/// `A+ = A - c B^T G`, `B+ = B - c G A^T` with `c = eta * alpha / rank`.
fn joint_update(factors: &LoraFactors, grad: &DenseMatrix, coeff: f64) -> LoraFactors {
    LoraFactors {
        a: factors.a.add_scaled(-coeff, &factors.b.transpose().matmul(grad)),
        b: factors.b.add_scaled(-coeff, &grad.matmul(&factors.a.transpose())),
    }
}

/// One joint descent step on the factor pair held in `state.factors`. The
/// record measures the composite parameter, which is where the objective
/// actually lives for this method.
pub fn joint_lora_step(
    state: &mut ChainState,
    obj: &dyn Objective,
    eta: f64,
    alpha: f64,
    rank: usize,
    cfg: &ChainConfig,
) -> Result<TraceRecord> {
    let factors = state.factors.as_ref().ok_or_else(|| {
        Error::InvalidConfig("joint step requires initialized factors".into())
    })?;
    let comp = factors.composite(&state.w, alpha, rank);
    let (rec, grad) = measure_with_grad(obj, &comp, state.t, cfg.seed, cfg.method.tag());
    let next = joint_update(factors, &grad, eta * alpha / rank as f64);
    if !(next.a.is_all_finite() && next.b.is_all_finite()) {
        return Err(Error::Divergence {
            step: rec.step,
            f_value: rec.f,
        });
    }
    state.factors = Some(next);
    state.t += 1;
    Ok(rec)
}

/// One block of the merge-and-reinitialize baseline: fresh factor pair,
/// `cola_inner_steps` joint steps against the current anchor, then merge the
/// product into the anchor.
pub(crate) fn cola_block(
    state: &mut ChainState,
    obj: &dyn Objective,
    cfg: &ChainConfig,
) -> Result<TraceRecord> {
    let (rec, _grad) = measure_with_grad(obj, &state.w, state.t, cfg.seed, cfg.method.tag());
    let rank = cfg.sketch.rank;
    let alpha = cfg.sketch.alpha;
    // The factor step size maps to the merged step size exactly as in the
    // chain: eta = gamma * rank / alpha, so the factor update coefficient
    // eta * alpha / rank is gamma itself.
    let coeff = cfg.step_gamma;
    let mut factors = LoraFactors::standard_init(obj.param_shape(), rank, &mut state.rng);
    for _ in 0..cfg.cola_inner_steps {
        let comp = factors.composite(&state.w, alpha, rank);
        let g = obj.gradient(&comp);
        factors = joint_update(&factors, &g, coeff);
        if !(factors.a.is_all_finite() && factors.b.is_all_finite()) {
            return Err(Error::Divergence {
                step: rec.step,
                f_value: rec.f,
            });
        }
    }
    let merged = factors.composite(&state.w, alpha, rank);
    if !merged.is_all_finite() {
        return Err(Error::Divergence {
            step: rec.step,
            f_value: rec.f,
        });
    }
    state.w = merged;
    state.t += 1;
    Ok(rec)
}
