//! Chained low-rank optimizers and their baselines.
//!
//! One *block* of the chain samples a fresh sketch, improves the trainable
//! factor against the current anchor `W^t`, merges the product back, and
//! moves on. With the exact one-step solution of the block subproblem the
//! merge collapses to a projected gradient step, so the chain is just
//! gradient descent seen through a random projector. The inner solver can
//! also be a random-reshuffling pass or a few stochastic gradient steps.
//!
//! The baselines deliberately break that structure: `JointLora` trains both
//! factors of a single block jointly (never merging), `Cola` merges but also
//! trains both factors per block, `AsymmLora` freezes one random sketch for
//! the whole run, and `Fpft` is plain full-parameter gradient descent.

mod joint;
mod minimize;
mod rates;
mod steps;

pub use joint::{joint_lora_step, LoraFactors};
pub use minimize::minimize_to_stationarity;
pub use rates::{theorem_rate_check, RateReport, RATE_SLACK};
pub use steps::{
    projected_update, rac_gd_step, rac_rr_epoch, rac_sgd_step, rr_permutation,
    solve_subproblem_closed_form, AbcConstants, GradientSampler,
};
pub(crate) use steps::rr_pass;

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::objectives::Objective;
use crate::rng::RandomStream;
use crate::sketch::{build_projector, sample_sketch, SketchSpec};

/// Optimization method run by [`run_chain`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Chained sketch updates: fresh sketch per block, exact inner solve.
    RacLora,
    /// One block, both factors trained jointly, never merged.
    JointLora,
    /// Fresh factor pair per block, a few joint steps, then merge.
    Cola,
    /// One frozen sketch for the entire run.
    AsymmLora,
    /// Full-parameter gradient descent.
    Fpft,
}

impl Method {
    pub fn tag(&self) -> &'static str {
        match self {
            Method::RacLora => "rac-lora",
            Method::JointLora => "joint-lora",
            Method::Cola => "cola",
            Method::AsymmLora => "asymm-lora",
            Method::Fpft => "fpft",
        }
    }

    pub fn all() -> [Method; 5] {
        [
            Method::RacLora,
            Method::JointLora,
            Method::Cola,
            Method::AsymmLora,
            Method::Fpft,
        ]
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rac-lora" => Ok(Method::RacLora),
            "joint-lora" => Ok(Method::JointLora),
            "cola" => Ok(Method::Cola),
            "asymm-lora" => Ok(Method::AsymmLora),
            "fpft" => Ok(Method::Fpft),
            other => Err(Error::Parse(format!("unknown method '{other}'"))),
        }
    }
}

/// Inner solver for one block of the chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InnerSolver {
    /// One exact gradient step on the block subproblem.
    GdOneStep,
    /// One pass of without-replacement sampling over the finite sum.
    RrOnePass,
    /// `steps` stochastic gradient steps under a sketch frozen for the
    /// block.
    Sgd { sampler: GradientSampler, steps: usize },
}

impl fmt::Display for InnerSolver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InnerSolver::GdOneStep => write!(f, "gd"),
            InnerSolver::RrOnePass => write!(f, "rr"),
            InnerSolver::Sgd { .. } => write!(f, "sgd"),
        }
    }
}

/// Everything needed to reproduce one chain run.
#[derive(Debug, Clone)]
pub struct ChainConfig {
    pub method: Method,
    /// Number of blocks (or steps, for the single-block baselines).
    pub chain_length: usize,
    /// Step size `gamma` of the merged update.
    pub step_gamma: f64,
    pub sketch: SketchSpec,
    pub inner: InnerSolver,
    pub seed: u64,
    /// Joint steps per block for [`Method::Cola`].
    pub cola_inner_steps: usize,
    /// Stop a run early once `f - f*` drops to this value, when `f*` is
    /// known. `None` always runs the full chain length.
    pub stop_gap: Option<f64>,
}

impl ChainConfig {
    pub fn new(method: Method, chain_length: usize, step_gamma: f64, sketch: SketchSpec) -> Self {
        ChainConfig {
            method,
            chain_length,
            step_gamma,
            sketch,
            inner: InnerSolver::GdOneStep,
            seed: 0,
            cola_inner_steps: 1,
            stop_gap: None,
        }
    }

    pub fn validate(&self, obj: &dyn Objective) -> Result<()> {
        self.sketch.validate()?;
        let shape = obj.param_shape();
        if (self.sketch.target_rows, self.sketch.target_cols) != shape {
            return Err(Error::InvalidConfig(format!(
                "sketch targets {}x{}, objective parameters are {}x{}",
                self.sketch.target_rows, self.sketch.target_cols, shape.0, shape.1
            )));
        }
        if self.chain_length == 0 {
            return Err(Error::InvalidConfig("chain length must be at least 1".into()));
        }
        if !(self.step_gamma.is_finite() && self.step_gamma > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "step size must be positive and finite, got {}",
                self.step_gamma
            )));
        }
        if self.cola_inner_steps == 0 {
            return Err(Error::InvalidConfig("cola needs at least one inner step".into()));
        }
        if let InnerSolver::Sgd { sampler, steps } = self.inner {
            if steps == 0 {
                return Err(Error::InvalidConfig("sgd needs at least one step".into()));
            }
            if let GradientSampler::UniformSingle { batch } = sampler {
                if batch == 0 {
                    return Err(Error::InvalidConfig("sgd batch must be at least 1".into()));
                }
            }
        }
        Ok(())
    }
}

/// Mutable state of a chain in flight.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub w: DenseMatrix,
    /// Block index, starting at 0.
    pub t: usize,
    pub rng: RandomStream,
    /// Factor pair for the joint methods, absent otherwise.
    pub factors: Option<LoraFactors>,
}

impl ChainState {
    pub fn new(w0: DenseMatrix, seed: u64) -> Self {
        ChainState {
            w: w0,
            t: 0,
            rng: RandomStream::from_seed(seed),
            factors: None,
        }
    }
}

/// One measured point of a run. The first six fields are what trace files
/// persist; the rest are in-memory diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub step: usize,
    pub f: f64,
    pub grad_norm_sq: f64,
    /// `f - f*` when the optimum is known.
    pub gap: Option<f64>,
    pub seed: u64,
    pub method: String,
    /// `<grad f, H grad f>` at this iterate, for methods that apply a
    /// projector deterministically (GD inner, frozen sketch, full FT).
    pub h_grad_inner: Option<f64>,
    /// Set on the terminal record of a run that tripped divergence
    /// detection.
    pub diverged: bool,
}

/// Completed run: the trace plus run-level diagnostics.
#[derive(Debug, Clone)]
pub struct ChainRun {
    pub records: Vec<TraceRecord>,
    /// Index drawn uniformly from `0..chain_length` after the loop, for the
    /// pick-a-random-iterate stationarity guarantee. Drawn from the run's
    /// own stream, so it is reproducible.
    pub output_index: usize,
    /// Steps at which `f(W^{t+1}) <= f(W^t) - (gamma/2) <grad, H grad>`
    /// failed by more than 1e-9. Only counted where the inner product was
    /// recorded.
    pub descent_violations: usize,
    pub diverged: bool,
    pub final_w: DenseMatrix,
    /// `|H grad f|` at the final iterate for the frozen-sketch baseline:
    /// the quantity it actually drives to zero.
    pub final_restricted_grad_norm: Option<f64>,
}

impl ChainRun {
    pub fn final_record(&self) -> &TraceRecord {
        self.records.last().expect("runs contain at least one record")
    }
}

/// Divergence guard: a run is flagged once `f` exceeds this or goes
/// non-finite.
pub(crate) fn divergence_threshold(f0: f64) -> f64 {
    1e6 * f0 + 1e6
}

pub(crate) fn measure(
    obj: &dyn Objective,
    w: &DenseMatrix,
    step: usize,
    seed: u64,
    method_tag: &str,
) -> TraceRecord {
    measure_with_grad(obj, w, step, seed, method_tag).0
}

/// Measurement plus the gradient it computed, so step functions evaluate the
/// objective once per block.
pub(crate) fn measure_with_grad(
    obj: &dyn Objective,
    w: &DenseMatrix,
    step: usize,
    seed: u64,
    method_tag: &str,
) -> (TraceRecord, DenseMatrix) {
    let f = obj.value(w);
    let g = obj.gradient(w);
    let rec = TraceRecord {
        step,
        f,
        grad_norm_sq: g.frobenius_norm_sq(),
        gap: obj.optimum_value().map(|fs| f - fs),
        seed,
        method: method_tag.to_string(),
        h_grad_inner: None,
        diverged: false,
    };
    (rec, g)
}

/// Runs one configured chain from `w0` and returns the trace.
///
/// The trace holds one record per block measured *before* the block's
/// update, plus a final record for the last iterate. Divergence (non-finite
/// values, or `f > 1e6 * f(W^0) + 1e6`) terminates the trace with a flagged
/// record. Identical `(objective, config)` inputs produce bitwise-identical
/// traces.
pub fn run_chain(obj: &dyn Objective, cfg: &ChainConfig, w0: &DenseMatrix) -> Result<ChainRun> {
    cfg.validate(obj)?;
    if w0.shape() != obj.param_shape() {
        return Err(Error::InvalidConfig(format!(
            "initial point is {:?}, objective parameters are {:?}",
            w0.shape(),
            obj.param_shape()
        )));
    }
    if !w0.is_all_finite() {
        return Err(Error::InvalidConfig("initial point has non-finite entries".into()));
    }
    if let Some(l) = obj.smoothness_l() {
        if cfg.step_gamma > 1.0 / l * (1.0 + 1e-12) {
            log::warn!(
                "step size {} exceeds 1/L = {}; descent per step is no longer guaranteed",
                cfg.step_gamma,
                1.0 / l
            );
        }
    }

    let mut state = ChainState::new(w0.clone(), cfg.seed);
    let f0 = obj.value(w0);
    let threshold = divergence_threshold(f0);
    let mut records: Vec<TraceRecord> = Vec::with_capacity(cfg.chain_length + 1);
    let mut diverged = false;

    // Method-specific one-time setup.
    let frozen = match cfg.method {
        Method::AsymmLora => {
            let sketch = sample_sketch(&cfg.sketch, &mut state.rng)?;
            Some(build_projector(&sketch, cfg.sketch.side)?)
        }
        Method::JointLora => {
            state.factors = Some(LoraFactors::standard_init(
                obj.param_shape(),
                cfg.sketch.rank,
                &mut state.rng,
            ));
            None
        }
        _ => None,
    };

    for _ in 0..cfg.chain_length {
        let stepped = match cfg.method {
            Method::RacLora => match cfg.inner {
                InnerSolver::GdOneStep => rac_gd_step(&mut state, obj, cfg),
                InnerSolver::RrOnePass => rac_rr_epoch(&mut state, obj, cfg),
                InnerSolver::Sgd { .. } => rac_sgd_step(&mut state, obj, cfg),
            },
            Method::Fpft => steps::full_gd_step(&mut state, obj, cfg),
            Method::AsymmLora => steps::frozen_projector_step(
                &mut state,
                obj,
                cfg,
                frozen.as_ref().expect("frozen projector initialized"),
            ),
            Method::JointLora => {
                let eta = cfg.step_gamma * cfg.sketch.rank as f64 / cfg.sketch.alpha;
                joint_lora_step(&mut state, obj, eta, cfg.sketch.alpha, cfg.sketch.rank, cfg)
            }
            Method::Cola => joint::cola_block(&mut state, obj, cfg),
        };
        match stepped {
            Ok(mut rec) => {
                if !rec.f.is_finite() || rec.f > threshold {
                    rec.diverged = true;
                    records.push(rec);
                    diverged = true;
                    break;
                }
                let reached_target = match (cfg.stop_gap, rec.gap) {
                    (Some(target), Some(gap)) => gap <= target,
                    _ => false,
                };
                records.push(rec);
                if reached_target {
                    break;
                }
            }
            Err(Error::Divergence { step, f_value }) => {
                records.push(TraceRecord {
                    step,
                    f: f_value,
                    grad_norm_sq: f64::NAN,
                    gap: obj.optimum_value().map(|fs| f_value - fs),
                    seed: cfg.seed,
                    method: cfg.method.tag().to_string(),
                    h_grad_inner: None,
                    diverged: true,
                });
                diverged = true;
                break;
            }
            Err(e) => return Err(e),
        }
    }

    // The joint baseline keeps its progress in the factors; everything the
    // run reports about the final iterate must look at the composite.
    let final_w = match (&state.factors, cfg.method) {
        (Some(f), Method::JointLora) => f.composite(&state.w, cfg.sketch.alpha, cfg.sketch.rank),
        _ => state.w.clone(),
    };

    if !diverged {
        // Terminal record for the final iterate.
        let mut rec = measure(obj, &final_w, state.t, cfg.seed, cfg.method.tag());
        if !rec.f.is_finite() || rec.f > threshold {
            rec.diverged = true;
            diverged = true;
        }
        records.push(rec);
    }

    let output_index = state.rng.uniform_index(cfg.chain_length);
    let descent_violations = count_descent_violations(&records, cfg.step_gamma);
    let final_restricted_grad_norm = match (&frozen, cfg.method) {
        (Some(proj), Method::AsymmLora) if final_w.is_all_finite() => Some(
            proj.apply(cfg.sketch.side, &obj.gradient(&final_w))
                .frobenius_norm(),
        ),
        _ => None,
    };
    Ok(ChainRun {
        final_w,
        records,
        output_index,
        descent_violations,
        diverged,
        final_restricted_grad_norm,
    })
}

/// Counts violations of the per-step descent inequality
/// `f(W^{t+1}) <= f(W^t) - (gamma/2) <grad, H grad> + 1e-9` across
/// consecutive records that carry the projected inner product.
pub fn count_descent_violations(records: &[TraceRecord], gamma: f64) -> usize {
    let mut violations = 0;
    for pair in records.windows(2) {
        if let Some(h_inner) = pair[0].h_grad_inner {
            if pair[1].f > pair[0].f - 0.5 * gamma * h_inner + 1e-9 {
                violations += 1;
            }
        }
    }
    violations
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::counterexample;
    use crate::sketch::SketchSpec;

    fn base_cfg(method: Method, steps: usize, gamma: f64) -> ChainConfig {
        ChainConfig::new(method, steps, gamma, SketchSpec::left_gaussian(1, 3, 3))
    }

    #[test]
    fn identical_configs_produce_identical_traces() {
        let obj = counterexample();
        let cfg = ChainConfig {
            seed: 77,
            inner: InnerSolver::RrOnePass,
            ..base_cfg(Method::RacLora, 40, 0.05)
        };
        let w0 = DenseMatrix::zeros(3, 3);
        let a = run_chain(&obj, &cfg, &w0).unwrap();
        let b = run_chain(&obj, &cfg, &w0).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.output_index, b.output_index);
        assert_eq!(a.final_w.to_row_major_vec(), b.final_w.to_row_major_vec());
    }

    #[test]
    fn chain_reaches_the_quadratic_optimum() {
        let obj = counterexample();
        let cfg = ChainConfig {
            seed: 3,
            stop_gap: Some(1e-10),
            ..base_cfg(Method::RacLora, 3000, 0.05)
        };
        let run = run_chain(&obj, &cfg, &DenseMatrix::zeros(3, 3)).unwrap();
        assert!(!run.diverged);
        let final_gap = run.final_record().gap.unwrap();
        assert!(final_gap <= 1e-10, "final gap {final_gap}");
        // The stop rule should have fired well before the full budget.
        assert!(run.records.len() < 2000);
        assert_eq!(run.descent_violations, 0);
    }

    #[test]
    fn joint_baseline_fails_where_the_chain_succeeds() {
        let obj = counterexample();
        let w0 = DenseMatrix::zeros(3, 3);
        for seed in 0..3 {
            let cfg = ChainConfig {
                seed,
                ..base_cfg(Method::JointLora, 3000, 0.05)
            };
            let run = run_chain(&obj, &cfg, &w0).unwrap();
            let failed = run.diverged || run.final_record().gap.unwrap() > 1e-3;
            assert!(failed, "seed {seed} unexpectedly solved the problem");
        }
    }

    #[test]
    fn frozen_sketch_stalls_with_zero_restricted_gradient() {
        let obj = counterexample();
        let cfg = ChainConfig {
            seed: 5,
            ..base_cfg(Method::AsymmLora, 2000, 0.05)
        };
        let run = run_chain(&obj, &cfg, &DenseMatrix::zeros(3, 3)).unwrap();
        assert!(!run.diverged);
        // It minimizes perfectly inside the frozen range and nowhere else.
        assert!(run.final_restricted_grad_norm.unwrap() < 1e-8);
        assert!(run.final_record().grad_norm_sq.sqrt() > 1e-2);
    }

    #[test]
    fn divergence_flags_only_the_terminal_record() {
        let obj = counterexample();
        let cfg = base_cfg(Method::Fpft, 500, 0.5);
        let run = run_chain(&obj, &cfg, &DenseMatrix::from_row_major(3, 3, &vec![1.0; 9]).unwrap())
            .unwrap();
        assert!(run.diverged);
        let last = run.records.last().unwrap();
        assert!(last.diverged);
        assert!(run.records.len() < 500, "divergence should cut the run short");
        for rec in &run.records[..run.records.len() - 1] {
            assert!(!rec.diverged);
            assert!(rec.f.is_finite());
        }
    }

    #[test]
    fn output_index_is_in_range_and_reproducible() {
        let obj = counterexample();
        let cfg = ChainConfig {
            seed: 9,
            ..base_cfg(Method::RacLora, 25, 0.05)
        };
        let w0 = DenseMatrix::zeros(3, 3);
        let a = run_chain(&obj, &cfg, &w0).unwrap();
        assert!(a.output_index < 25);
        assert_eq!(a.output_index, run_chain(&obj, &cfg, &w0).unwrap().output_index);
    }

    #[test]
    fn mismatched_initial_point_is_rejected() {
        let obj = counterexample();
        let cfg = base_cfg(Method::RacLora, 10, 0.05);
        assert!(matches!(
            run_chain(&obj, &cfg, &DenseMatrix::zeros(2, 2)),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn method_tags_round_trip() {
        for m in Method::all() {
            assert_eq!(m.tag().parse::<Method>().unwrap(), m);
        }
        assert!("no-such-method".parse::<Method>().is_err());
    }

    #[test]
    fn descent_violation_counter_sees_a_planted_increase() {
        let mk = |step: usize, f: f64, h: Option<f64>| TraceRecord {
            step,
            f,
            grad_norm_sq: 1.0,
            gap: None,
            seed: 0,
            method: "fpft".into(),
            h_grad_inner: h,
            diverged: false,
        };
        let records = vec![
            mk(0, 10.0, Some(4.0)),
            mk(1, 9.9, Some(4.0)), // needs f <= 10 - 0.05*4 = 9.8: violated
            mk(2, 9.0, None),      // no inner product: not checked
            mk(3, 100.0, None),
        ];
        assert_eq!(count_descent_violations(&records, 0.1), 1);
    }
}
