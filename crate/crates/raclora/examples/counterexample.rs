//! The 9-dimensional quadratic that separates the methods.
//!
//! Every method starts from zero on `f(x) = x^T diag(10,1,...,1) x + 1^T x`
//! with parameters reshaped 3x3, step size 1/L = 1/20, sketch rank 1. The
//! chained method reaches the optimum; the jointly trained baselines stall
//! or blow up; the frozen-sketch baseline becomes stationary for its
//! restricted subproblem while the full gradient stays large.
//!
//! Run with: cargo run --example counterexample

use raclora::harness::counterexample_suite;
use raclora::objectives::{counterexample, Objective};
use raclora::optimizers::Method;
use raclora::Result;

fn main() -> Result<()> {
    let obj = counterexample();
    println!(
        "objective: 3x3 quadratic, L = {}, mu = {}, f* = {}",
        obj.smoothness_l().unwrap(),
        obj.pl_mu().unwrap(),
        obj.optimum_value().unwrap()
    );
    println!();

    let seeds: Vec<u64> = (0..8).collect();
    let outcomes = counterexample_suite(3000, &seeds, None)?;

    println!(
        "{:<12} {:>8} {:>6} {:>12} {:>12}",
        "method", "gamma", "div", "worst gap", "worst |g|^2"
    );
    for method in [
        Method::RacLora,
        Method::AsymmLora,
        Method::JointLora,
        Method::Cola,
    ] {
        let gammas: Vec<f64> = {
            let mut g: Vec<f64> = outcomes
                .iter()
                .filter(|o| o.method == method)
                .map(|o| o.gamma)
                .collect();
            g.dedup();
            g
        };
        for gamma in gammas {
            let cell: Vec<_> = outcomes
                .iter()
                .filter(|o| o.method == method && o.gamma == gamma)
                .collect();
            let diverged = cell.iter().filter(|o| o.diverged).count();
            let alive: Vec<_> = cell.iter().filter(|o| !o.diverged).collect();
            let show = |v: Option<f64>| match v {
                Some(x) => format!("{x:.3e}"),
                None => "-".into(),
            };
            let worst_gap = alive
                .iter()
                .filter_map(|o| o.final_gap)
                .reduce(f64::max);
            let worst_gns = alive
                .iter()
                .map(|o| o.final_grad_norm_sq)
                .reduce(f64::max);
            println!(
                "{:<12} {:>8} {:>4}/{:<1} {:>12} {:>12}",
                method.tag(),
                gamma,
                diverged,
                cell.len(),
                show(worst_gap),
                show(worst_gns)
            );
        }
    }

    println!();
    println!("what the frozen sketch actually minimizes:");
    for o in outcomes.iter().filter(|o| o.method == Method::AsymmLora) {
        println!(
            "  seed {}: |H grad f| = {:.2e} while |grad f| = {:.2e}",
            o.seed,
            o.final_restricted_grad_norm.unwrap(),
            o.final_grad_norm_sq.sqrt()
        );
    }
    Ok(())
}
