//! Observed convergence next to the guarantees it must respect.
//!
//! On the 9-dimensional quadratic the chained method with an exact inner
//! step obeys three things: per-step descent `f(W^{t+1}) <= f(W^t) -
//! (gamma/2) <grad f, H grad f>`, the uniform-iterate stationarity ceiling
//! `(1/T) sum |grad f|^2 <= 2 (f_0 - f*) / (lambda gamma T)`, and the
//! linear gap contraction `(f_T - f*) <= (1 - gamma mu lambda)^T (f_0 -
//! f*)`. This example runs 30 seeds and prints each observation against
//! its ceiling. The observed per-path contraction is faster than the
//! in-expectation ceiling, which is why the comparisons are one-sided.
//!
//! Run with: cargo run --example theorem_rates

use raclora::linalg::DenseMatrix;
use raclora::objectives::{counterexample, Objective};
use raclora::optimizers::{run_chain, theorem_rate_check, ChainConfig, Method, RATE_SLACK};
use raclora::sketch::SketchSpec;
use raclora::Result;

fn main() -> Result<()> {
    let obj = counterexample();
    let l = obj.smoothness_l().unwrap();
    let mu = obj.pl_mu().unwrap();
    let cfg = ChainConfig::new(
        Method::RacLora,
        300,
        1.0 / l,
        SketchSpec::left_gaussian(1, 3, 3),
    );
    let lambda = cfg.sketch.isotropic_lambda_min();
    println!(
        "quadratic with L = {l}, mu = {mu}; rank-1 left sketch on 3 rows, lambda = {lambda:.4}"
    );
    println!(
        "expected linear rate ceiling: 1 - gamma mu lambda = {:.6}",
        1.0 - cfg.step_gamma * mu * lambda
    );
    println!();

    let w0 = DenseMatrix::zeros(3, 3);
    let runs: Vec<_> = (0..30)
        .map(|seed| {
            run_chain(
                &obj,
                &ChainConfig {
                    seed,
                    ..cfg.clone()
                },
                &w0,
            )
        })
        .collect::<Result<_>>()?;

    let report = theorem_rate_check(&runs, &obj, &cfg)?;
    println!("{} runs, horizon T = {}:", report.runs, report.horizon);
    println!(
        "  descent violations     {:>12} of {} pairs",
        report.descent_violations, report.descent_pairs_checked
    );
    println!(
        "  mean |grad f|^2        {:>12.4e} vs ceiling {:.4e}  (ok: {})",
        report.mean_grad_norm_sq,
        report.stationarity_bound.unwrap(),
        report.stationarity_ok.unwrap()
    );
    println!(
        "  mean gap ratio         {:>12.4e} vs ceiling {:.4e}  (ok: {})",
        report.mean_gap_ratio.unwrap(),
        report.gap_ratio_bound.unwrap(),
        report.gap_contraction_ok.unwrap()
    );
    println!(
        "  observed contraction   {:>12.6} per step, ceiling {:.6}",
        report.observed_contraction.unwrap(),
        1.0 - cfg.step_gamma * mu * lambda
    );
    println!();
    println!(
        "ceilings are one-sided with slack {RATE_SLACK}: observed decrease may beat them, never exceed them."
    );
    Ok(())
}
