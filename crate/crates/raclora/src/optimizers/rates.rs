//! Checks completed runs against the stated convergence guarantees.

use crate::error::{Error, Result};
use crate::objectives::Objective;

use super::{ChainConfig, ChainRun, Method};

/// Multiplicative slack applied to the theoretical ceilings before they are
/// declared satisfied, absorbing Monte Carlo noise at the seed counts the
/// suite runs with.
pub const RATE_SLACK: f64 = 1.15;

/// Observed statistics of a batch of runs next to their theoretical
/// ceilings. `None` fields mean the objective lacks the constant the bound
/// needs (`f*` or `mu`).
#[derive(Debug, Clone)]
pub struct RateReport {
    /// Runs that entered the aggregates.
    pub runs: usize,
    /// Runs excluded because they tripped divergence detection.
    pub diverged_runs: usize,
    /// Common step horizon `T`: the shortest trace length minus one.
    pub horizon: usize,
    pub gamma: f64,
    /// Smallest expected-projector eigenvalue the bounds are stated with
    /// (1 for full-parameter descent).
    pub lambda_min_h: f64,
    /// Mean over runs and steps `0..T` of `|grad f|^2` at the pre-update
    /// iterates, the quantity the uniform-iterate guarantee controls.
    pub mean_grad_norm_sq: f64,
    /// Ceiling `2 (f_0 - f*) / (lambda gamma T)`, averaged over runs.
    pub stationarity_bound: Option<f64>,
    /// Whether the observed mean respects the ceiling times [`RATE_SLACK`].
    pub stationarity_ok: Option<bool>,
    /// Mean over runs of `(f_T - f*) / (f_0 - f*)`.
    pub mean_gap_ratio: Option<f64>,
    /// Ceiling `(1 - gamma mu lambda)^T`.
    pub gap_ratio_bound: Option<f64>,
    pub gap_contraction_ok: Option<bool>,
    /// Geometric per-step gap contraction, measured on the prefix before
    /// the gap reaches its floating-point floor and averaged over runs.
    pub observed_contraction: Option<f64>,
    /// Per-step descent inequality failures across all runs.
    pub descent_violations: usize,
    /// Record pairs the descent inequality was evaluated on.
    pub descent_pairs_checked: usize,
}

/// Aggregates a batch of runs of one configuration and compares the
/// observed decrease against the stationarity and contraction ceilings.
///
/// Diverged runs are excluded from the rate aggregates but still contribute
/// their descent-inequality counts, so a too-large step size shows up as
/// violations instead of an error.
pub fn theorem_rate_check(
    runs: &[ChainRun],
    obj: &dyn Objective,
    cfg: &ChainConfig,
) -> Result<RateReport> {
    if runs.is_empty() {
        return Err(Error::InvalidConfig("rate check needs at least one run".into()));
    }
    let mut descent_violations = 0;
    let mut descent_pairs_checked = 0;
    for run in runs {
        descent_violations += run.descent_violations;
        descent_pairs_checked += run
            .records
            .windows(2)
            .filter(|pair| pair[0].h_grad_inner.is_some())
            .count();
    }

    let live: Vec<&ChainRun> = runs.iter().filter(|r| !r.diverged).collect();
    let diverged_runs = runs.len() - live.len();
    if live.is_empty() {
        return Ok(RateReport {
            runs: 0,
            diverged_runs,
            horizon: 0,
            gamma: cfg.step_gamma,
            lambda_min_h: lambda_for(cfg),
            mean_grad_norm_sq: f64::NAN,
            stationarity_bound: None,
            stationarity_ok: None,
            mean_gap_ratio: None,
            gap_ratio_bound: None,
            gap_contraction_ok: None,
            observed_contraction: None,
            descent_violations,
            descent_pairs_checked,
        });
    }

    let horizon = live
        .iter()
        .map(|r| r.records.len() - 1)
        .min()
        .expect("at least one live run");
    if horizon == 0 {
        return Err(Error::InvalidConfig(
            "rate check needs traces with at least one step".into(),
        ));
    }
    let lambda = lambda_for(cfg);
    let gamma = cfg.step_gamma;
    let fstar = obj.optimum_value();

    let mut grad_acc = 0.0;
    let mut bound_acc = 0.0;
    let mut ratio_acc = 0.0;
    let mut contraction_acc = 0.0;
    let mut contraction_runs = 0usize;
    for run in &live {
        let recs = &run.records;
        grad_acc += recs[..horizon].iter().map(|r| r.grad_norm_sq).sum::<f64>()
            / horizon as f64;
        if let Some(fs) = fstar {
            let gap0 = recs[0].f - fs;
            bound_acc += 2.0 * gap0 / (lambda * gamma * horizon as f64);
            ratio_acc += (recs[horizon].f - fs) / gap0;

            // Per-step contraction is only meaningful while the gap is
            // resolvable in f64; stop at 1e-12 of the initial gap.
            let floor = gap0 * 1e-12;
            let mut last = 0usize;
            for (t, rec) in recs[..=horizon].iter().enumerate() {
                if rec.f - fs > floor {
                    last = t;
                }
            }
            if last >= 1 {
                let gap_last = recs[last].f - fs;
                contraction_acc += ((gap_last / gap0).ln() / last as f64).exp();
                contraction_runs += 1;
            }
        }
    }
    let n = live.len() as f64;
    let mean_grad_norm_sq = grad_acc / n;
    let stationarity_bound = fstar.map(|_| bound_acc / n);
    let stationarity_ok = stationarity_bound.map(|b| mean_grad_norm_sq <= b * RATE_SLACK);
    let mean_gap_ratio = fstar.map(|_| ratio_acc / n);
    let gap_ratio_bound = match (fstar, obj.pl_mu()) {
        (Some(_), Some(mu)) => Some((1.0 - gamma * mu * lambda).powi(horizon as i32)),
        _ => None,
    };
    let gap_contraction_ok = match (mean_gap_ratio, gap_ratio_bound) {
        (Some(r), Some(b)) => Some(r <= b * RATE_SLACK),
        _ => None,
    };
    let observed_contraction = if contraction_runs > 0 {
        Some(contraction_acc / contraction_runs as f64)
    } else {
        None
    };

    Ok(RateReport {
        runs: live.len(),
        diverged_runs,
        horizon,
        gamma,
        lambda_min_h: lambda,
        mean_grad_norm_sq,
        stationarity_bound,
        stationarity_ok,
        mean_gap_ratio,
        gap_ratio_bound,
        gap_contraction_ok,
        observed_contraction,
        descent_violations,
        descent_pairs_checked,
    })
}

fn lambda_for(cfg: &ChainConfig) -> f64 {
    match cfg.method {
        Method::Fpft => 1.0,
        _ => cfg.sketch.isotropic_lambda_min(),
    }
}

#[cfg(test)]
mod tests {
    use super::super::{run_chain, ChainConfig, Method};
    use super::*;
    use crate::linalg::DenseMatrix;
    use crate::objectives::counterexample;
    use crate::sketch::SketchSpec;

    fn batch(gamma: f64, steps: usize, seeds: u64, method: Method) -> Vec<ChainRun> {
        let obj = counterexample();
        (0..seeds)
            .map(|seed| {
                let cfg = ChainConfig {
                    seed,
                    ..ChainConfig::new(method, steps, gamma, SketchSpec::left_gaussian(1, 3, 3))
                };
                run_chain(&obj, &cfg, &DenseMatrix::zeros(3, 3)).unwrap()
            })
            .collect()
    }

    #[test]
    fn chain_at_one_over_l_satisfies_both_ceilings() {
        let obj = counterexample();
        let runs = batch(0.05, 100, 20, Method::RacLora);
        let cfg = ChainConfig::new(Method::RacLora, 100, 0.05, SketchSpec::left_gaussian(1, 3, 3));
        let report = theorem_rate_check(&runs, &obj, &cfg).unwrap();
        assert_eq!(report.runs, 20);
        assert_eq!(report.diverged_runs, 0);
        assert_eq!(report.stationarity_ok, Some(true));
        assert_eq!(report.gap_contraction_ok, Some(true));
        assert_eq!(report.descent_violations, 0);
        assert!(report.descent_pairs_checked >= 20 * 100);
        let contraction = report.observed_contraction.unwrap();
        assert!(contraction < 1.0 && contraction > 0.9);
    }

    #[test]
    fn oversized_step_reports_descent_violations_instead_of_failing() {
        let obj = counterexample();
        // Ten times 1/L: the quadratic blows up, and the report should say
        // so through the descent counters rather than an error.
        let runs = batch(0.5, 50, 3, Method::Fpft);
        let cfg = ChainConfig::new(Method::Fpft, 50, 0.5, SketchSpec::left_gaussian(1, 3, 3));
        let report = theorem_rate_check(&runs, &obj, &cfg).unwrap();
        assert!(report.descent_violations > 0);
        assert!(report.diverged_runs > 0);
    }

    #[test]
    fn empty_batch_is_rejected() {
        let obj = counterexample();
        let cfg = ChainConfig::new(Method::RacLora, 10, 0.05, SketchSpec::left_gaussian(1, 3, 3));
        assert!(matches!(
            theorem_rate_check(&[], &obj, &cfg),
            Err(Error::InvalidConfig(_))
        ));
    }
}
