//! Release gates for the crate, evaluated end to end in one serial pass.
//!
//! Eleven criteria cover the counterexample separation, the two theorem
//! ceilings, per-step descent, rank scaling, projector statistics, gradient
//! correctness, the inner-solver reductions, the federated reduction, and
//! byte-level determinism. Each criterion prints exactly one verdict line;
//! run with `cargo test --test acceptance -- --nocapture` to see them all.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use raclora::federated::{dissimilarity, run_fed_chain, ClientData, FedConfig};
use raclora::harness::{
    fed_quadratic_scenario, gen_synthetic, load_regression_csv, rank_sweep, run_experiment,
    DataPreset, ExperimentConfig, TraceFile,
};
use raclora::linalg::{sym_eig_extremes, DenseMatrix};
use raclora::objectives::{
    counterexample, make_linear_regression, make_logistic_regression, Objective, RegressionSpec,
};
use raclora::optimizers::{
    rac_gd_step, rac_rr_epoch, rr_permutation, run_chain, ChainConfig, ChainRun, ChainState,
    GradientSampler, InnerSolver, Method,
};
use raclora::rng::RandomStream;
use raclora::sketch::{
    build_projector, estimate_expected_projector, sample_sketch, SketchDistribution, SketchSide,
    SketchSpec,
};

type Verdict = Result<String, String>;

/// Descent bookkeeping across every chained-GD run the suite executes with
/// `gamma <= 1/L`, feeding criterion 5.
#[derive(Default)]
struct DescentLedger {
    violations: usize,
    pairs: usize,
    runs: usize,
}

impl DescentLedger {
    fn absorb(&mut self, run: &ChainRun) {
        self.violations += run.descent_violations;
        self.pairs += run
            .records
            .windows(2)
            .filter(|pair| pair[0].h_grad_inner.is_some())
            .count();
        self.runs += 1;
    }
}

fn quad_cfg(method: Method, chain_length: usize, gamma: f64, seed: u64) -> ChainConfig {
    ChainConfig {
        seed,
        ..ChainConfig::new(method, chain_length, gamma, SketchSpec::left_gaussian(1, 3, 3))
    }
}

fn err_of(e: raclora::Error) -> String {
    format!("error: {e}")
}

// Criterion 1: the chained method reaches the optimum of the stiff
// 9-dimensional quadratic at gamma = 1/L for every seed, fast.
fn c1_counterexample_convergence(ledger: &mut DescentLedger) -> Verdict {
    let start = Instant::now();
    let obj = counterexample();
    let w0 = DenseMatrix::zeros(3, 3);
    let mut worst_block = 0usize;
    for seed in 0..20 {
        let run = run_chain(&obj, &quad_cfg(Method::RacLora, 3000, 0.05, seed), &w0)
            .map_err(err_of)?;
        ledger.absorb(&run);
        let hit = run
            .records
            .iter()
            .find(|r| r.gap.is_some_and(|g| g <= 1e-10))
            .map(|r| r.step);
        match hit {
            Some(step) => worst_block = worst_block.max(step),
            None => {
                return Err(format!(
                    "seed {seed} never reached gap <= 1e-10; final gap {:?}",
                    run.final_record().gap
                ))
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    if secs >= 5.0 {
        return Err(format!("runtime {secs:.2}s exceeds the 5 s budget"));
    }
    Ok(format!(
        "20/20 seeds reached gap <= 1e-10, worst at block {worst_block}, in {secs:.2}s"
    ))
}

// Criterion 2: the joint baselines fail on the same quadratic at gamma =
// 1/L, and the frozen sketch is stationary only for its subspace.
fn c2_baseline_failures() -> Verdict {
    let start = Instant::now();
    let obj = counterexample();
    let w0 = DenseMatrix::zeros(3, 3);
    let mut joint_bad = 0;
    let mut cola_bad = 0;
    for seed in 0..20 {
        let joint = run_chain(&obj, &quad_cfg(Method::JointLora, 3000, 0.05, seed), &w0)
            .map_err(err_of)?;
        if joint.diverged || joint.final_record().grad_norm_sq > 1e-4 {
            joint_bad += 1;
        }
        let mut cola_cfg = quad_cfg(Method::Cola, 600, 0.05, seed);
        cola_cfg.cola_inner_steps = 5;
        let cola = run_chain(&obj, &cola_cfg, &w0).map_err(err_of)?;
        if cola.diverged || cola.final_record().grad_norm_sq > 1e-4 {
            cola_bad += 1;
        }
        let frozen = run_chain(&obj, &quad_cfg(Method::AsymmLora, 3000, 0.05, seed), &w0)
            .map_err(err_of)?;
        let restricted = frozen
            .final_restricted_grad_norm
            .ok_or_else(|| format!("seed {seed}: frozen run lost its restricted gradient"))?;
        let grad_norm = frozen.final_record().grad_norm_sq.sqrt();
        if !(restricted <= 1e-8 && grad_norm > 1e-2) {
            return Err(format!(
                "seed {seed}: frozen sketch ended with |H grad| = {restricted:.2e}, |grad| = {grad_norm:.2e}"
            ));
        }
    }
    if joint_bad < 18 {
        return Err(format!("joint baseline stuck/diverged on only {joint_bad}/20 seeds"));
    }
    if cola_bad < 18 {
        return Err(format!("chained-joint baseline stuck/diverged on only {cola_bad}/20 seeds"));
    }
    let secs = start.elapsed().as_secs_f64();
    if secs >= 10.0 {
        return Err(format!("runtime {secs:.2}s exceeds the 10 s budget"));
    }
    Ok(format!(
        "joint {joint_bad}/20, chained-joint {cola_bad}/20 stuck or diverged; frozen sketch restricted-stationary 20/20, in {secs:.2}s"
    ))
}

/// Fifty 300-block runs at gamma = 1/L on the counterexample, shared by
/// criteria 3 and 4.
fn rate_batch(ledger: &mut DescentLedger) -> Result<(Vec<ChainRun>, f64), String> {
    let start = Instant::now();
    let obj = counterexample();
    let w0 = DenseMatrix::zeros(3, 3);
    let mut runs = Vec::with_capacity(50);
    for seed in 0..50 {
        let run = run_chain(&obj, &quad_cfg(Method::RacLora, 300, 0.05, seed), &w0)
            .map_err(err_of)?;
        ledger.absorb(&run);
        runs.push(run);
    }
    Ok((runs, start.elapsed().as_secs_f64()))
}

// Criterion 3: seed-averaged gap contraction stays under the linear-rate
// ceiling (1 - gamma mu lambda)^T with 15 percent slack.
fn c3_linear_rate(runs: &[ChainRun], secs: f64) -> Verdict {
    let rate: f64 = 1.0 - 0.05 * 2.0 * (1.0 / 3.0);
    let mut detail = String::new();
    for t in [100usize, 300] {
        let mut sum = 0.0;
        for run in runs {
            if run.records.len() <= t {
                return Err(format!("run shorter than {t} blocks"));
            }
            let gap0 = run.records[0].gap.ok_or("missing gap at block 0")?;
            let gap_t = run.records[t].gap.ok_or("missing gap")?;
            sum += gap_t / gap0;
        }
        let mean = sum / runs.len() as f64;
        let bound = rate.powi(t as i32) * 1.15;
        if mean > bound {
            return Err(format!(
                "mean gap ratio {mean:.3e} at T = {t} exceeds ceiling {bound:.3e}"
            ));
        }
        let _ = write!(detail, "T={t}: {mean:.1e} <= {bound:.1e}  ");
        }
    if secs >= 10.0 {
        return Err(format!("runtime {secs:.2}s exceeds the 10 s budget"));
    }
    Ok(format!("{detail}over 50 seeds in {secs:.2}s"))
}

// Criterion 4: the uniform-iterate stationarity ceiling holds at both
// horizons with the same slack.
fn c4_stationarity_bound(runs: &[ChainRun]) -> Verdict {
    let lambda = 1.0 / 3.0;
    let gamma = 0.05;
    let mut detail = String::new();
    for t in [50usize, 200] {
        let mut sum = 0.0;
        for run in runs {
            let gap0 = run.records[0].gap.ok_or("missing gap at block 0")?;
            let mean_gns: f64 = run.records[..t]
                .iter()
                .map(|r| r.grad_norm_sq)
                .sum::<f64>()
                / t as f64;
            let bound = 2.0 * gap0 / (lambda * gamma * t as f64);
            sum += mean_gns / bound;
        }
        let mean_ratio = sum / runs.len() as f64;
        if mean_ratio > 1.15 {
            return Err(format!(
                "mean gradient power at T = {t} is {mean_ratio:.3} of the ceiling (max 1.15)"
            ));
        }
        let _ = write!(detail, "T={t}: {:.2}x ceiling  ", mean_ratio);
    }
    Ok(format!("{detail}over 50 seeds"))
}

// Criterion 5: zero descent-inequality violations across every chained-GD
// run this suite executed with gamma <= 1/L.
fn c5_descent(dir: &Path, ledger: &mut DescentLedger) -> Verdict {
    // Extra coverage beyond the quadratic: both regression objectives.
    let (fine_spec, _) =
        load_regression_csv(&dir.join("linreg_finetune.csv")).map_err(err_of)?;
    let fine = make_linear_regression(fine_spec).map_err(err_of)?;
    let l_fine = fine.smoothness_l().ok_or("fine-tune split lost its L")?;
    let w0 = DenseMatrix::zeros(10, 10);
    for seed in 0..10 {
        let cfg = ChainConfig {
            seed,
            ..ChainConfig::new(
                Method::RacLora,
                300,
                1.0 / l_fine,
                SketchSpec::left_gaussian(2, 10, 10),
            )
        };
        ledger.absorb(&run_chain(&fine, &cfg, &w0).map_err(err_of)?);
    }
    let (log_spec, _) = load_regression_csv(&dir.join("logreg_train.csv")).map_err(err_of)?;
    let logreg = make_logistic_regression(log_spec).map_err(err_of)?;
    let l_log = logreg.smoothness_l().ok_or("logistic objective lost its L")?;
    for seed in 0..5 {
        let cfg = ChainConfig {
            seed,
            ..ChainConfig::new(
                Method::RacLora,
                200,
                1.0 / l_log,
                SketchSpec::left_gaussian(3, 10, 10),
            )
        };
        ledger.absorb(&run_chain(&logreg, &cfg, &w0).map_err(err_of)?);
    }
    if ledger.violations > 0 {
        return Err(format!(
            "{} descent violations across {} step pairs",
            ledger.violations, ledger.pairs
        ));
    }
    Ok(format!(
        "0 violations across {} step pairs from {} runs",
        ledger.pairs, ledger.runs
    ))
}

// Criterion 6: iterations-to-threshold scale like 10/r on the regression
// preset, and the full-rank chain is full-parameter descent.
fn c6_rank_scaling(dir: &Path, ledger: &mut DescentLedger) -> Verdict {
    let seeds: Vec<u64> = (0..10).collect();
    let rows = rank_sweep(dir, &[1, 2, 5, 10], &seeds, 1e-6, 20_000).map_err(err_of)?;
    let full = rows
        .iter()
        .find(|r| r.rank == 10)
        .ok_or("rank-10 row missing")?
        .mean_iters;
    let mut detail = String::new();
    for row in &rows {
        let ideal = 10.0 / row.rank as f64;
        let normalized = row.mean_iters / full / ideal;
        if !(0.6..=1.5).contains(&normalized) {
            return Err(format!(
                "rank {}: slowdown {:.2} is {normalized:.2}x the ideal {ideal:.1}, outside [0.6, 1.5]",
                row.rank,
                row.mean_iters / full
            ));
        }
        let _ = write!(detail, "r{}:{:.2}x/{:.0} ", row.rank, row.mean_iters / full, ideal);
    }

    let (pre_spec, _) = load_regression_csv(&dir.join("linreg_pretrain.csv")).map_err(err_of)?;
    let (fine_spec, _) =
        load_regression_csv(&dir.join("linreg_finetune.csv")).map_err(err_of)?;
    let pre = make_linear_regression(pre_spec).map_err(err_of)?;
    let fine = make_linear_regression(fine_spec).map_err(err_of)?;
    let w0 = pre.minimizer().ok_or("pretrain normal equations unsolved")?;
    let l = fine.smoothness_l().ok_or("fine-tune split lost its L")?;
    let rac_cfg = ChainConfig {
        seed: 0,
        ..ChainConfig::new(
            Method::RacLora,
            200,
            1.0 / l,
            SketchSpec::left_gaussian(10, 10, 10),
        )
    };
    let fpft_cfg = ChainConfig {
        method: Method::Fpft,
        ..rac_cfg.clone()
    };
    let rac = run_chain(&fine, &rac_cfg, &w0).map_err(err_of)?;
    let fpft = run_chain(&fine, &fpft_cfg, &w0).map_err(err_of)?;
    ledger.absorb(&rac);
    let mut worst = 0.0f64;
    for (a, b) in rac.records.iter().zip(&fpft.records) {
        let dev = (a.f - b.f).abs() / (1.0 + a.f.abs());
        worst = worst.max(dev);
    }
    if worst > 1e-10 {
        return Err(format!(
            "full-rank chain deviates from full-parameter descent by {worst:.2e} per step"
        ));
    }
    Ok(format!("{detail}; full rank == full descent to {worst:.1e}"))
}

// Criterion 7: every sampled projector is an orthogonal projector, and the
// Monte Carlo mean matches (r/m) I entrywise within 3 standard errors.
fn c7_projector_suite() -> Verdict {
    let mut rng = RandomStream::from_seed(707);
    let dists = [
        SketchDistribution::GaussianStd,
        SketchDistribution::Rademacher,
        SketchDistribution::CoordinateSubset,
    ];
    for case in 0..1000usize {
        let m = 2 + rng.uniform_index(7);
        let n = 2 + rng.uniform_index(7);
        let side = if rng.uniform_index(2) == 0 {
            SketchSide::Left
        } else {
            SketchSide::Right
        };
        let rank = 1 + rng.uniform_index(m.min(n));
        let spec = SketchSpec {
            side,
            rank,
            target_rows: m,
            target_cols: n,
            distribution: dists[case % 3],
            alpha: rank as f64,
        };
        let sketch = sample_sketch(&spec, &mut rng).map_err(err_of)?;
        let proj = build_projector(&sketch, side).map_err(err_of)?;
        let h = &proj.h;
        let sym = h.sub(&h.transpose()).max_abs();
        let idem = h.matmul(h).sub(h).max_abs();
        let dim = spec.projector_dim();
        let trace: f64 = (0..dim).map(|i| h.get(i, i)).sum();
        let trace_dev = (trace - proj.source_rank as f64).abs();
        let (lo, hi) = sym_eig_extremes(h).map_err(err_of)?;
        let spectrum_dev = [lo, hi]
            .iter()
            .map(|v| v.abs().min((v - 1.0).abs()))
            .fold(0.0f64, f64::max);
        if sym > 1e-10 || idem > 1e-10 || trace_dev > 1e-8 || spectrum_dev > 1e-8 {
            return Err(format!(
                "case {case} ({spec:?}): sym {sym:.1e}, idem {idem:.1e}, trace dev {trace_dev:.1e}, spectrum dev {spectrum_dev:.1e}"
            ));
        }
    }

    let mut worst_z = 0.0f64;
    for m in 3..=10usize {
        for rank in 1..=3usize {
            let spec = SketchSpec {
                side: SketchSide::Left,
                rank,
                target_rows: m,
                target_cols: 3,
                distribution: SketchDistribution::GaussianStd,
                alpha: rank as f64,
            };
            let mut rng = RandomStream::derive(7008, m as u64, rank as u64);
            let est = estimate_expected_projector(&spec, 10_000, &mut rng).map_err(err_of)?;
            let lambda = rank as f64 / m as f64;
            let mut dev = 0.0f64;
            for i in 0..m {
                for j in 0..m {
                    let target = if i == j { lambda } else { 0.0 };
                    dev = dev.max((est.mean_h.get(i, j) - target).abs());
                }
            }
            // The absolute floor covers the full-rank cells, where every
            // draw is exactly I and the standard error collapses below
            // floating-point roundoff.
            if dev > 3.0 * est.std_err + 1e-12 {
                return Err(format!(
                    "m={m} r={rank}: worst entry off by {dev:.2e}, 3 SE = {:.2e}",
                    3.0 * est.std_err
                ));
            }
            worst_z = worst_z.max(dev / est.std_err.max(1e-12));
        }
    }
    Ok(format!(
        "1000 draws are exact projectors; E[H] within 3 SE of (r/m)I on 24 cells, worst z = {worst_z:.2}"
    ))
}

fn fd_rel_err(obj: &dyn Objective, w: &DenseMatrix) -> Result<f64, String> {
    let h = 1e-6;
    let g = obj.gradient(w);
    let (rows, cols) = obj.param_shape();
    let base = w.to_row_major_vec();
    let mut diff_sq = 0.0;
    let mut g_sq = 0.0;
    for idx in 0..rows * cols {
        let mut up = base.clone();
        up[idx] += h;
        let mut dn = base.clone();
        dn[idx] -= h;
        let fu = obj.value(&DenseMatrix::from_row_major(rows, cols, &up).map_err(err_of)?);
        let fd = obj.value(&DenseMatrix::from_row_major(rows, cols, &dn).map_err(err_of)?);
        let est = (fu - fd) / (2.0 * h);
        let gi = g.get(idx / cols, idx % cols);
        diff_sq += (est - gi) * (est - gi);
        g_sq += gi * gi;
    }
    Ok(diff_sq.sqrt() / g_sq.sqrt().max(1e-12))
}

fn random_point(shape: (usize, usize), rng: &mut RandomStream) -> Result<DenseMatrix, String> {
    let entries: Vec<f64> = (0..shape.0 * shape.1).map(|_| rng.standard_normal()).collect();
    DenseMatrix::from_row_major(shape.0, shape.1, &entries).map_err(err_of)
}

// Criterion 8: analytic gradients of all three objectives agree with
// central finite differences at 100 random points each.
fn c8_gradient_checks() -> Verdict {
    let mut data_rng = RandomStream::from_seed(88);
    let quad = counterexample();

    let (n, d) = (120usize, 25usize);
    let xs: Vec<f64> = (0..n * d).map(|_| data_rng.standard_normal()).collect();
    let x = DenseMatrix::from_row_major(n, d, &xs).map_err(err_of)?;
    let y: Vec<f64> = (0..n).map(|_| data_rng.standard_normal()).collect();
    let linreg = make_linear_regression(RegressionSpec {
        x,
        y,
        reg_lambda: 1e-3,
        reshape: (5, 5),
    })
    .map_err(err_of)?;

    let (n, d) = (90usize, 16usize);
    let xs: Vec<f64> = (0..n * d).map(|_| data_rng.standard_normal()).collect();
    let x = DenseMatrix::from_row_major(n, d, &xs).map_err(err_of)?;
    let y: Vec<f64> = (0..n)
        .map(|_| if data_rng.standard_normal() >= 0.0 { 1.0 } else { -1.0 })
        .collect();
    let logreg = make_logistic_regression(RegressionSpec {
        x,
        y,
        reg_lambda: 0.05,
        reshape: (4, 4),
    })
    .map_err(err_of)?;

    let objs: [(&str, &dyn Objective); 3] =
        [("quad9", &quad), ("linreg", &linreg), ("logreg", &logreg)];
    let mut detail = String::new();
    for (label, obj) in objs {
        let mut rng = RandomStream::derive(808, label.len() as u64, 0);
        let mut worst = 0.0f64;
        for _ in 0..100 {
            let w = random_point(obj.param_shape(), &mut rng)?;
            worst = worst.max(fd_rel_err(obj, &w)?);
        }
        if worst > 1e-5 {
            return Err(format!("{label}: worst relative gradient error {worst:.2e}"));
        }
        let _ = write!(detail, "{label}: {worst:.1e}  ");
    }
    Ok(format!("{detail}(100 points each)"))
}

// Criterion 9: the shuffled pass and the sgd block collapse to the exact
// step in the degenerate cases, bitwise, and a two-sample pass matches a
// hand-simulated oracle.
fn c9_inner_reductions() -> Verdict {
    let obj = counterexample();
    let w0 = DenseMatrix::from_row_major(3, 3, &[0.4; 9]).map_err(err_of)?;

    let cfg_gd = quad_cfg(Method::RacLora, 5, 0.05, 19);
    let mut cfg_rr = cfg_gd.clone();
    cfg_rr.inner = InnerSolver::RrOnePass;
    let mut gd = ChainState::new(w0.clone(), 19);
    let mut rr = ChainState::new(w0.clone(), 19);
    for block in 0..5 {
        let a = rac_gd_step(&mut gd, &obj, &cfg_gd).map_err(err_of)?;
        let b = rac_rr_epoch(&mut rr, &obj, &cfg_rr).map_err(err_of)?;
        if a.f.to_bits() != b.f.to_bits()
            || a.grad_norm_sq.to_bits() != b.grad_norm_sq.to_bits()
            || gd.w.to_row_major_vec() != rr.w.to_row_major_vec()
        {
            return Err(format!("one-sample shuffled pass diverged from gd at block {block}"));
        }
    }

    let gd_run = run_chain(&obj, &quad_cfg(Method::RacLora, 40, 0.05, 23), &w0).map_err(err_of)?;
    let mut cfg_sgd = quad_cfg(Method::RacLora, 40, 0.05, 23);
    cfg_sgd.inner = InnerSolver::Sgd {
        sampler: GradientSampler::FullGradient,
        steps: 1,
    };
    let sgd_run = run_chain(&obj, &cfg_sgd, &w0).map_err(err_of)?;
    if gd_run.records != sgd_run.records
        || gd_run.final_w.to_row_major_vec() != sgd_run.final_w.to_row_major_vec()
    {
        return Err("full-gradient sgd block differs from gd block".into());
    }

    // Two-sample oracle, simulated by hand from the same stream positions.
    let mut rng = RandomStream::from_seed(54);
    let xs: Vec<f64> = (0..2 * 9).map(|_| rng.standard_normal()).collect();
    let x = DenseMatrix::from_row_major(2, 9, &xs).map_err(err_of)?;
    let two = make_linear_regression(RegressionSpec {
        x,
        y: vec![1.0, -2.0],
        reg_lambda: 0.01,
        reshape: (3, 3),
    })
    .map_err(err_of)?;
    let gamma = 0.1;
    let cfg = ChainConfig {
        seed: 5,
        inner: InnerSolver::RrOnePass,
        ..ChainConfig::new(Method::RacLora, 1, gamma, SketchSpec::left_gaussian(1, 3, 3))
    };
    let mut state = ChainState::new(DenseMatrix::zeros(3, 3), 5);
    rac_rr_epoch(&mut state, &two, &cfg).map_err(err_of)?;

    let mut oracle_rng = RandomStream::from_seed(5);
    let sketch = sample_sketch(&cfg.sketch, &mut oracle_rng).map_err(err_of)?;
    let proj = build_projector(&sketch, SketchSide::Left).map_err(err_of)?;
    let order = rr_permutation(5, 0, 0, 2);
    let mut w = DenseMatrix::zeros(3, 3);
    for &i in &order {
        let g = two.sample_gradient(&w, i);
        w = w.add_scaled(-gamma, &proj.h.matmul(&g));
    }
    let dev = state.w.sub(&w).max_abs();
    if dev > 1e-12 {
        return Err(format!("two-sample pass deviates from the hand oracle by {dev:.2e}"));
    }
    Ok(format!(
        "one-sample pass and full-gradient sgd match gd bitwise; two-sample oracle within {dev:.1e}"
    ))
}

// Criterion 10: the federated chain collapses to the plain chain for one
// client, descends in theorem mode, and reports sane dissimilarity.
fn c10_federated() -> Verdict {
    let sketch = SketchSpec::left_gaussian(1, 3, 3);
    let w0 = DenseMatrix::zeros(3, 3);

    let solo = vec![ClientData::new(0, std::sync::Arc::new(counterexample()))];
    let mut fed_cfg = FedConfig::new(1, 1, 0.05, 1.0, 100, sketch.clone());
    fed_cfg.seed = 31;
    let fed = run_fed_chain(&solo, &fed_cfg, &w0).map_err(err_of)?;
    let chain_cfg = ChainConfig {
        seed: 31,
        inner: InnerSolver::RrOnePass,
        ..ChainConfig::new(Method::RacLora, 100, 0.05, sketch.clone())
    };
    let chain = run_chain(&counterexample(), &chain_cfg, &w0).map_err(err_of)?;
    if fed.records.len() != chain.records.len() {
        return Err(format!(
            "record counts differ: fed {} vs chain {}",
            fed.records.len(),
            chain.records.len()
        ));
    }
    let mut worst = 0.0f64;
    for (a, b) in fed.records.iter().zip(&chain.records) {
        let dev = (a.f - b.f).abs() / (1.0 + a.f.abs());
        worst = worst.max(dev);
    }
    if worst > 1e-10 {
        return Err(format!("single-client federation deviates from the chain by {worst:.2e}"));
    }

    // Theorem-mode descent, seed-averaged over 20 sketch paths.
    let clients = fed_quadratic_scenario(4, 0.5, 9).map_err(err_of)?;
    let rounds = 100usize;
    let mut mean_f = vec![0.0f64; rounds + 1];
    for seed in 0..20u64 {
        let mut cfg = FedConfig::new(4, 4, 1.0 / 120.0, 1.0, rounds, sketch.clone());
        cfg.seed = seed;
        cfg.theorem_mode = true;
        let run = run_fed_chain(&clients, &cfg, &w0).map_err(err_of)?;
        if run.diverged || run.records.len() != rounds + 1 {
            return Err(format!("seed {seed}: theorem-mode run ended early"));
        }
        for (i, rec) in run.records.iter().enumerate() {
            mean_f[i] += rec.f / 20.0;
        }
    }
    for i in 0..rounds {
        if mean_f[i + 1] > mean_f[i] + 1e-12 * (1.0 + mean_f[i].abs()) {
            return Err(format!(
                "seed-averaged f rose at round {i}: {} -> {}",
                mean_f[i],
                mean_f[i + 1]
            ));
        }
    }

    // Dissimilarity across scenarios.
    for (m, het, seed) in [(2usize, 0.3, 1u64), (4, 0.5, 9), (6, 1.5, 33), (3, 2.5, 5)] {
        let scenario = fed_quadratic_scenario(m, het, seed).map_err(err_of)?;
        let rep = dissimilarity(&scenario).map_err(err_of)?;
        if rep.delta_star < 0.0 {
            return Err(format!(
                "scenario ({m}, {het}, {seed}): Delta* = {} is negative",
                rep.delta_star
            ));
        }
    }
    let identical = fed_quadratic_scenario(5, 0.0, 4).map_err(err_of)?;
    let rep = dissimilarity(&identical).map_err(err_of)?;
    if rep.delta_star != 0.0 {
        return Err(format!("identical clients report Delta* = {}", rep.delta_star));
    }
    Ok(format!(
        "single-client reduction within {worst:.1e}; theorem-mode mean f non-increasing over 100 rounds x 20 seeds; Delta* >= 0, = 0 when identical"
    ))
}

// Criterion 11: re-running any configuration with its seed reproduces the
// trace bytes exactly, in memory and on disk.
fn c11_determinism(dir: &Path) -> Verdict {
    let obj = counterexample();
    let w0 = DenseMatrix::zeros(3, 3);
    let chain_render = |seed: u64| -> Result<String, String> {
        let cfg = quad_cfg(Method::RacLora, 500, 0.05, seed);
        let run = run_chain(&obj, &cfg, &w0).map_err(err_of)?;
        Ok(TraceFile::from_run(&run, &cfg, "quad9").render())
    };
    if chain_render(3)? != chain_render(3)? {
        return Err("chain re-run changed its trace bytes".into());
    }

    let cola_render = || -> Result<String, String> {
        let mut cfg = quad_cfg(Method::Cola, 600, 0.05, 0);
        cfg.cola_inner_steps = 5;
        let run = run_chain(&obj, &cfg, &w0).map_err(err_of)?;
        Ok(TraceFile::from_run(&run, &cfg, "quad9").render())
    };
    if cola_render()? != cola_render()? {
        return Err("diverging baseline re-run changed its trace bytes".into());
    }

    let data_a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data_b = tempfile::tempdir().map_err(|e| e.to_string())?;
    gen_synthetic(DataPreset::Linreg, data_a.path(), 0).map_err(err_of)?;
    gen_synthetic(DataPreset::Linreg, data_b.path(), 0).map_err(err_of)?;
    for name in ["linreg_pretrain.csv", "linreg_finetune.csv"] {
        let a = fs::read(data_a.path().join(name)).map_err(|e| e.to_string())?;
        let b = fs::read(data_b.path().join(name)).map_err(|e| e.to_string())?;
        if a != b {
            return Err(format!("regenerated {name} differs"));
        }
    }

    let mut exp = ExperimentConfig::new(
        &format!("linreg:{}", dir.join("linreg_finetune.csv").display()),
        Method::RacLora,
        60,
        0.2,
    );
    exp.seeds = vec![0, 1, 2];
    let out_a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out_b = tempfile::tempdir().map_err(|e| e.to_string())?;
    run_experiment(&exp, None, Some(out_a.path())).map_err(err_of)?;
    run_experiment(&exp, None, Some(out_b.path())).map_err(err_of)?;
    let mut compared = 0;
    for entry in fs::read_dir(out_a.path()).map_err(|e| e.to_string())? {
        let entry = entry.map_err(|e| e.to_string())?;
        let a = fs::read(entry.path()).map_err(|e| e.to_string())?;
        let b = fs::read(out_b.path().join(entry.file_name())).map_err(|e| e.to_string())?;
        if a != b {
            return Err(format!("{:?} differs between identical experiments", entry.file_name()));
        }
        compared += 1;
    }
    if compared != 3 {
        return Err(format!("expected 3 trace files per experiment, found {compared}"));
    }

    let clients = fed_quadratic_scenario(4, 0.5, 9).map_err(err_of)?;
    let fed_render = || -> Result<String, String> {
        let mut cfg = FedConfig::new(4, 3, 0.01, 1.0, 60, SketchSpec::left_gaussian(1, 3, 3));
        cfg.seed = 9;
        let run = run_fed_chain(&clients, &cfg, &w0).map_err(err_of)?;
        Ok(TraceFile::from_fed_run(&run, &cfg, "fedquad").render())
    };
    if fed_render()? != fed_render()? {
        return Err("federated re-run changed its trace bytes".into());
    }
    Ok("chain, baseline, datagen, experiment-to-disk, and federated reruns are byte-identical".into())
}

#[test]
fn acceptance() {
    let mut ledger = DescentLedger::default();
    let data_dir = tempfile::tempdir().expect("temp dir");
    gen_synthetic(DataPreset::Linreg, data_dir.path(), 0).expect("linreg data");
    gen_synthetic(DataPreset::Logreg, data_dir.path(), 0).expect("logreg data");

    let c1 = c1_counterexample_convergence(&mut ledger);
    let c2 = c2_baseline_failures();
    let (c3, c4) = match rate_batch(&mut ledger) {
        Ok((runs, secs)) => (c3_linear_rate(&runs, secs), c4_stationarity_bound(&runs)),
        Err(e) => (Err(e.clone()), Err(e)),
    };
    let c6 = c6_rank_scaling(data_dir.path(), &mut ledger);
    let c5 = c5_descent(data_dir.path(), &mut ledger);
    let c7 = c7_projector_suite();
    let c8 = c8_gradient_checks();
    let c9 = c9_inner_reductions();
    let c10 = c10_federated();
    let c11 = c11_determinism(data_dir.path());

    let results = [
        ("c01 counterexample convergence", c1),
        ("c02 baseline failures", c2),
        ("c03 linear rate ceiling", c3),
        ("c04 stationarity ceiling", c4),
        ("c05 per-step descent", c5),
        ("c06 rank scaling", c6),
        ("c07 projector suite", c7),
        ("c08 gradient checks", c8),
        ("c09 inner-solver reductions", c9),
        ("c10 federated reductions", c10),
        ("c11 determinism", c11),
    ];
    let mut failures = Vec::new();
    for (name, outcome) in results {
        match outcome {
            Ok(detail) => println!("[PASS] {name}: {detail}"),
            Err(detail) => {
                println!("[FAIL] {name}: {detail}");
                failures.push(format!("{name}: {detail}"));
            }
        }
    }
    assert!(
        failures.is_empty(),
        "{} criteria failed:\n{}",
        failures.len(),
        failures.join("\n")
    );
}
