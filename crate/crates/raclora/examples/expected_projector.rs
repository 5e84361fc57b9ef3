//! What a sampled sketch projects onto, checked against the closed form.
//!
//! Each block draws a sketch matrix and projects the gradient onto its
//! column space through `H = B (B^T B)^+ B^T`. Every draw is an exact
//! orthogonal projector of rank r. Averaged over draws, `E[H] = (r/m) I`
//! for all three entry distributions, and `r/m` is the curvature floor
//! that the convergence rate of the chain inherits.
//!
//! Run with: cargo run --example expected_projector

use raclora::rng::RandomStream;
use raclora::sketch::{
    build_projector, estimate_expected_projector, sample_sketch, SketchDistribution, SketchSide,
    SketchSpec,
};
use raclora::Result;

fn main() -> Result<()> {
    let spec = SketchSpec {
        side: SketchSide::Left,
        rank: 2,
        target_rows: 6,
        target_cols: 4,
        distribution: SketchDistribution::GaussianStd,
        alpha: 2.0,
    };

    // A single draw: H is symmetric, idempotent, and of rank exactly r.
    let mut rng = RandomStream::from_seed(1);
    let sketch = sample_sketch(&spec, &mut rng)?;
    let proj = build_projector(&sketch, spec.side)?;
    let h = &proj.h;
    let sym_err = h.sub(&h.transpose()).max_abs();
    let idem_err = h.matmul(h).sub(h).max_abs();
    let trace: f64 = (0..6).map(|i| h.get(i, i)).sum();
    println!("one Gaussian draw, m = 6, r = 2:");
    println!("  |H - H^T|_max   = {sym_err:.2e}");
    println!("  |H^2 - H|_max   = {idem_err:.2e}");
    println!("  trace(H)        = {trace:.12} (the rank)");
    println!();

    // Averaged draws: E[H] = (r/m) I for every distribution.
    println!("E[H] over 20000 draws vs (r/m) I = {:.4} I:", spec.isotropic_lambda_min());
    println!(
        "{:<18} {:>12} {:>12} {:>12}",
        "distribution", "min eig", "max eig", "max std err"
    );
    for dist in [
        SketchDistribution::GaussianStd,
        SketchDistribution::Rademacher,
        SketchDistribution::CoordinateSubset,
    ] {
        let spec = SketchSpec {
            distribution: dist,
            ..spec.clone()
        };
        let mut rng = RandomStream::from_seed(42);
        let est = estimate_expected_projector(&spec, 20_000, &mut rng)?;
        println!(
            "{:<18} {:>12.5} {:>12.5} {:>12.2e}",
            format!("{dist:?}"),
            est.lambda_min_hat,
            est.lambda_max_hat,
            est.std_err
        );
    }
    println!();
    println!("the floor r/m is what enters the linear rate 1 - gamma * mu * r/m.");
    Ok(())
}
