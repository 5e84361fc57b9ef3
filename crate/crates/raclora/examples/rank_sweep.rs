//! Sketch rank buys convergence speed at a predictable exchange rate.
//!
//! Generates the synthetic regression pair, pretrains on the large split by
//! solving its normal equations, then fine-tunes on the small split with
//! chained rank-r updates until the gap first drops below a threshold. The
//! expected cost of dropping from rank 10 to rank r is a factor of about
//! 10/r, and the measured slowdown lands near that ideal.
//!
//! Run with: cargo run --example rank_sweep

use raclora::harness::{gen_synthetic, rank_sweep, DataPreset};
use raclora::Result;

fn main() -> Result<()> {
    let dir = tempfile::tempdir()?;
    gen_synthetic(DataPreset::Linreg, dir.path(), 7)?;
    println!("data: two regression splits under {:?}", dir.path());

    let ranks = [2usize, 5, 10];
    let seeds: Vec<u64> = (0..4).collect();
    let rows = rank_sweep(dir.path(), &ranks, &seeds, 1e-6, 20_000)?;

    let full = rows
        .iter()
        .find(|r| r.rank == 10)
        .map(|r| r.mean_iters)
        .unwrap();
    println!(
        "{:>6} {:>12} {:>10} {:>10}",
        "rank", "mean iters", "slowdown", "ideal"
    );
    for row in &rows {
        println!(
            "{:>6} {:>12.1} {:>10.2} {:>10.2}",
            row.rank,
            row.mean_iters,
            row.mean_iters / full,
            10.0 / row.rank as f64
        );
    }
    Ok(())
}
