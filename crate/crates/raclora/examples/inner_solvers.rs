//! Three inner solvers for the block subproblem, and their exact overlaps.
//!
//! A block can be closed with one exact gradient step, one shuffled pass
//! over the finite sum, or several stochastic gradient steps under the
//! frozen sketch. On a one-sample objective the shuffled pass IS the exact
//! step, and an sgd block with the exact gradient and one step IS the gd
//! block; both reductions hold bitwise, record for record. On a real finite
//! sum the three solvers trade gradient evaluations against progress.
//!
//! Run with: cargo run --example inner_solvers

use raclora::linalg::DenseMatrix;
use raclora::objectives::{counterexample, make_linear_regression, Objective, RegressionSpec};
use raclora::optimizers::{run_chain, ChainConfig, GradientSampler, InnerSolver, Method};
use raclora::rng::RandomStream;
use raclora::sketch::SketchSpec;
use raclora::Result;

/// A small but genuine finite sum: 40 samples, 9 features, reshape 3x3.
fn small_linreg() -> Result<impl Objective> {
    let (n, d) = (40, 9);
    let mut rng = RandomStream::from_seed(11);
    let mut xs = Vec::with_capacity(n * d);
    for _ in 0..n * d {
        xs.push(rng.standard_normal());
    }
    let x = DenseMatrix::from_row_major(n, d, &xs)?;
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let mut dot = 0.0;
        for j in 0..d {
            dot += x.get(i, j) * ((j + 1) as f64 / d as f64);
        }
        y.push(dot + 0.01 * rng.standard_normal());
    }
    make_linear_regression(RegressionSpec {
        x,
        y,
        reg_lambda: 1e-3,
        reshape: (3, 3),
    })
}

fn main() -> Result<()> {
    // Exact reduction 1: a shuffled pass over a single-sample objective is
    // one exact gradient step.
    let quad = counterexample();
    let w0 = DenseMatrix::zeros(3, 3);
    let base = ChainConfig {
        seed: 3,
        ..ChainConfig::new(Method::RacLora, 200, 0.05, SketchSpec::left_gaussian(1, 3, 3))
    };
    let gd = run_chain(&quad, &base, &w0)?;
    let rr = run_chain(
        &quad,
        &ChainConfig {
            inner: InnerSolver::RrOnePass,
            ..base.clone()
        },
        &w0,
    )?;
    let same_f = gd
        .records
        .iter()
        .zip(&rr.records)
        .all(|(a, b)| a.f.to_bits() == b.f.to_bits());
    let same_w = gd.final_w.to_row_major_vec() == rr.final_w.to_row_major_vec();
    println!(
        "rr pass over one sample == gd step, {} f values and final iterate bitwise: {}",
        gd.records.len(),
        same_f && same_w
    );

    // Exact reduction 2: sgd with the exact gradient and one inner step is
    // the gd block.
    let sgd_full = run_chain(
        &quad,
        &ChainConfig {
            inner: InnerSolver::Sgd {
                sampler: GradientSampler::FullGradient,
                steps: 1,
            },
            ..base.clone()
        },
        &w0,
    )?;
    println!(
        "sgd(full gradient, 1 step) == gd, all records:               {}",
        gd.records == sgd_full.records
    );

    // On a real finite sum the solvers genuinely differ. A shuffled pass
    // takes N inner steps per block and an sgd block takes `steps`, so each
    // solver gets a step size that leaves the per-block effective step at
    // 1/L; every block then consumes exactly 40 sample gradients.
    let obj = small_linreg()?;
    let l = obj.smoothness_l().unwrap();
    let w0 = DenseMatrix::zeros(3, 3);
    println!();
    println!("40-sample regression, 400 blocks, effective block step 1/L:");
    println!("{:<22} {:>10} {:>12}", "inner solver", "gamma", "final gap");
    for (label, inner, gamma) in [
        ("gd (one exact step)", InnerSolver::GdOneStep, 1.0 / l),
        ("rr (one pass)", InnerSolver::RrOnePass, 1.0 / (40.0 * l)),
        (
            "sgd (batch 4, 10 steps)",
            InnerSolver::Sgd {
                sampler: GradientSampler::UniformSingle { batch: 4 },
                steps: 10,
            },
            1.0 / (10.0 * l),
        ),
    ] {
        let cfg = ChainConfig {
            inner,
            seed: 3,
            ..ChainConfig::new(Method::RacLora, 400, gamma, SketchSpec::left_gaussian(1, 3, 3))
        };
        let run = run_chain(&obj, &cfg, &w0)?;
        println!(
            "{:<22} {:>10.5} {:>12.3e}",
            label,
            gamma,
            run.final_record().gap.unwrap()
        );
    }
    Ok(())
}
