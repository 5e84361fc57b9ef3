//! Preset experiments: generic chain batches, the nine-dimensional
//! counterexample suite, and the regression rank sweep.
//!
//! Independent (method, seed) runs execute in parallel; each produces its
//! own trace, and files are written serially afterwards so directory
//! contents are deterministic.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::federated::ClientData;
use crate::linalg::DenseMatrix;
use crate::objectives::{
    counterexample, make_linear_regression, make_logistic_regression, make_quadratic, Objective,
    QuadraticSpec,
};
use crate::optimizers::{run_chain, ChainConfig, ChainRun, Method};
use crate::rng::RandomStream;
use crate::sketch::SketchSpec;

use super::config::ExperimentConfig;
use super::datagen::load_regression_csv;
use super::trace::TraceFile;

/// Objective selector: either the built-in counterexample quadratic or a
/// regression problem loaded from a dataset file.
#[derive(Debug, Clone, PartialEq)]
pub enum ObjectiveChoice {
    /// The 9-dimensional quadratic with one stiff coordinate, reshaped 3x3.
    Counterexample,
    Linreg(PathBuf),
    Logreg(PathBuf),
}

impl ObjectiveChoice {
    /// Parses `quad9`, `linreg:PATH`, or `logreg:PATH`.
    pub fn parse(name: &str) -> Result<Self> {
        if name == "quad9" {
            return Ok(ObjectiveChoice::Counterexample);
        }
        if let Some(path) = name.strip_prefix("linreg:") {
            return Ok(ObjectiveChoice::Linreg(PathBuf::from(path)));
        }
        if let Some(path) = name.strip_prefix("logreg:") {
            return Ok(ObjectiveChoice::Logreg(PathBuf::from(path)));
        }
        Err(Error::InvalidConfig(format!(
            "unknown objective '{name}' (expected quad9, linreg:PATH, or logreg:PATH)"
        )))
    }

    /// Short name used in trace headers and filenames.
    pub fn label(&self) -> &'static str {
        match self {
            ObjectiveChoice::Counterexample => "quad9",
            ObjectiveChoice::Linreg(_) => "linreg",
            ObjectiveChoice::Logreg(_) => "logreg",
        }
    }

    pub fn build(&self) -> Result<Arc<dyn Objective>> {
        match self {
            ObjectiveChoice::Counterexample => Ok(Arc::new(counterexample())),
            ObjectiveChoice::Linreg(path) => {
                let (spec, kind) = load_regression_csv(path)?;
                if kind != "linreg" {
                    return Err(Error::InvalidConfig(format!(
                        "{} holds '{kind}' data, not linreg",
                        path.display()
                    )));
                }
                Ok(Arc::new(make_linear_regression(spec)?))
            }
            ObjectiveChoice::Logreg(path) => {
                let (spec, kind) = load_regression_csv(path)?;
                if kind != "logreg" {
                    return Err(Error::InvalidConfig(format!(
                        "{} holds '{kind}' data, not logreg",
                        path.display()
                    )));
                }
                Ok(Arc::new(make_logistic_regression(spec)?))
            }
        }
    }
}

/// Resolves an objective name to a built objective plus its label.
pub fn build_objective(name: &str) -> Result<(Arc<dyn Objective>, String)> {
    let choice = ObjectiveChoice::parse(name)?;
    Ok((choice.build()?, choice.label().to_string()))
}

fn chain_config(exp: &ExperimentConfig, shape: (usize, usize), seed: u64) -> ChainConfig {
    ChainConfig {
        method: exp.method,
        chain_length: exp.chain_length,
        step_gamma: exp.step_gamma,
        sketch: SketchSpec {
            side: exp.side,
            rank: exp.rank,
            target_rows: shape.0,
            target_cols: shape.1,
            distribution: exp.distribution,
            alpha: exp.alpha,
        },
        inner: exp.inner,
        seed,
        cola_inner_steps: exp.cola_inner_steps,
        stop_gap: exp.stop_gap,
    }
}

/// Runs one experiment across its seed list, in parallel, starting from
/// `w0` (zeros by default). When `out_dir` is set, each trace is also
/// written to `out_dir` under its default filename.
pub fn run_experiment(
    exp: &ExperimentConfig,
    w0: Option<&DenseMatrix>,
    out_dir: Option<&Path>,
) -> Result<Vec<TraceFile>> {
    exp.validate()?;
    let (obj, label) = build_objective(&exp.objective)?;
    let shape = obj.param_shape();
    let zero = DenseMatrix::zeros(shape.0, shape.1);
    let start = w0.unwrap_or(&zero);
    let traces: Vec<TraceFile> = exp
        .seeds
        .par_iter()
        .map(|&seed| {
            let cfg = chain_config(exp, shape, seed);
            let run = run_chain(obj.as_ref(), &cfg, start)?;
            Ok(TraceFile::from_run(&run, &cfg, &label))
        })
        .collect::<Result<_>>()?;
    if let Some(dir) = out_dir {
        for t in &traces {
            t.write_to(&dir.join(t.default_filename()))?;
        }
    }
    Ok(traces)
}

/// One method/stepsize/seed cell of the counterexample suite.
#[derive(Debug, Clone)]
pub struct CounterexampleOutcome {
    pub method: Method,
    pub gamma: f64,
    pub seed: u64,
    pub final_f: f64,
    pub final_gap: Option<f64>,
    pub final_grad_norm_sq: f64,
    /// `|H grad f|` at the end, for the frozen-sketch baseline.
    pub final_restricted_grad_norm: Option<f64>,
    pub diverged: bool,
    pub trace: TraceFile,
}

/// Step sizes swept by the counterexample suite for the joint baselines:
/// `1/L`, `1/(10 L)`, `1/(100 L)`.
pub fn counterexample_gammas() -> [f64; 3] {
    let l = 20.0;
    [1.0 / l, 1.0 / (10.0 * l), 1.0 / (100.0 * l)]
}

/// Joint steps per merge block used by the chained-joint baseline, so
/// `chain_length` total inner steps spread over `chain_length / 5` blocks.
pub const COLA_INNER_STEPS: usize = 5;

/// Runs the full counterexample comparison: the chained method and the
/// frozen-sketch baseline at `gamma = 1/L`, and the joint baselines at the
/// swept step sizes. `chain_length` counts inner steps for every method.
pub fn counterexample_suite(
    chain_length: usize,
    seeds: &[u64],
    out_dir: Option<&Path>,
) -> Result<Vec<CounterexampleOutcome>> {
    if seeds.is_empty() {
        return Err(Error::InvalidConfig("seed list is empty".into()));
    }
    let obj = counterexample();
    let gamma0 = counterexample_gammas()[0];
    let mut cells: Vec<(Method, f64)> = vec![(Method::RacLora, gamma0), (Method::AsymmLora, gamma0)];
    for g in counterexample_gammas() {
        cells.push((Method::JointLora, g));
    }
    for g in counterexample_gammas() {
        cells.push((Method::Cola, g));
    }
    let mut tasks = Vec::new();
    for &(method, gamma) in &cells {
        for &seed in seeds {
            tasks.push((method, gamma, seed));
        }
    }
    let w0 = DenseMatrix::zeros(3, 3);
    let outcomes: Vec<CounterexampleOutcome> = tasks
        .par_iter()
        .map(|&(method, gamma, seed)| {
            let mut cfg = ChainConfig {
                seed,
                ..ChainConfig::new(method, chain_length, gamma, SketchSpec::left_gaussian(1, 3, 3))
            };
            if method == Method::Cola {
                cfg.cola_inner_steps = COLA_INNER_STEPS;
                cfg.chain_length = (chain_length / COLA_INNER_STEPS).max(1);
            }
            let run = run_chain(&obj, &cfg, &w0)?;
            Ok(outcome_of(&run, &cfg))
        })
        .collect::<Result<_>>()?;
    if let Some(dir) = out_dir {
        for o in &outcomes {
            let name = format!(
                "{}_quad9_gamma{}_seed{}.csv",
                o.method.tag(),
                o.gamma,
                o.seed
            );
            o.trace.write_to(&dir.join(name))?;
        }
    }
    Ok(outcomes)
}

fn outcome_of(run: &ChainRun, cfg: &ChainConfig) -> CounterexampleOutcome {
    let last = run.final_record();
    CounterexampleOutcome {
        method: cfg.method,
        gamma: cfg.step_gamma,
        seed: cfg.seed,
        final_f: last.f,
        final_gap: last.gap,
        final_grad_norm_sq: last.grad_norm_sq,
        final_restricted_grad_norm: run.final_restricted_grad_norm,
        diverged: run.diverged,
        trace: TraceFile::from_run(run, cfg, "quad9"),
    }
}

/// Seed-averaged iteration counts for one sketch rank.
#[derive(Debug, Clone)]
pub struct RankSweepRow {
    pub rank: usize,
    pub per_seed_iters: Vec<usize>,
    pub mean_iters: f64,
}

/// Runs the regression rank sweep: pretrain on the large split via its
/// normal equations, then fine-tune on the small split with chained sketch
/// updates at `gamma = 1/L`, counting blocks until the gap first reaches
/// `gap_threshold`. Expects `linreg_pretrain.csv` and `linreg_finetune.csv`
/// under `data_dir`.
pub fn rank_sweep(
    data_dir: &Path,
    ranks: &[usize],
    seeds: &[u64],
    gap_threshold: f64,
    max_blocks: usize,
) -> Result<Vec<RankSweepRow>> {
    if ranks.is_empty() || seeds.is_empty() {
        return Err(Error::InvalidConfig("ranks and seeds must be non-empty".into()));
    }
    let (pre_spec, _) = load_regression_csv(&data_dir.join("linreg_pretrain.csv"))?;
    let (fine_spec, _) = load_regression_csv(&data_dir.join("linreg_finetune.csv"))?;
    let pre = make_linear_regression(pre_spec)?;
    let fine = make_linear_regression(fine_spec)?;
    let w0 = pre
        .minimizer()
        .ok_or_else(|| Error::Unsupported("pretraining normal equations unsolvable".into()))?;
    let shape = fine.param_shape();
    let gamma = 1.0
        / fine
            .smoothness_l()
            .ok_or_else(|| Error::Unsupported("fine-tuning objective lacks L".into()))?;
    let mut rows = Vec::new();
    for &rank in ranks {
        let iters: Vec<usize> = seeds
            .par_iter()
            .map(|&seed| {
                let cfg = ChainConfig {
                    seed,
                    stop_gap: Some(gap_threshold),
                    ..ChainConfig::new(
                        Method::RacLora,
                        max_blocks,
                        gamma,
                        SketchSpec::left_gaussian(rank, shape.0, shape.1),
                    )
                };
                let run = run_chain(&fine, &cfg, &w0)?;
                run.records
                    .iter()
                    .find(|r| r.gap.is_some_and(|g| g <= gap_threshold))
                    .map(|r| r.step)
                    .ok_or_else(|| {
                        Error::Unsupported(format!(
                            "rank {rank} seed {seed}: gap {gap_threshold} not reached in {max_blocks} blocks"
                        ))
                    })
            })
            .collect::<Result<_>>()?;
        let mean = iters.iter().sum::<usize>() as f64 / iters.len() as f64;
        rows.push(RankSweepRow {
            rank,
            per_seed_iters: iters,
            mean_iters: mean,
        });
    }
    Ok(rows)
}

/// Builds a federation of heterogeneous diagonal quadratic clients over 3x3
/// parameters. Diagonal curvatures lie in [1, 10], so every client has
/// `L <= 20` and `mu >= 2`; `heterogeneity` scales how far the linear terms
/// spread around all-ones. Zero heterogeneity makes the clients share one
/// curvature and linear term.
pub fn fed_quadratic_scenario(
    num_clients: usize,
    heterogeneity: f64,
    seed: u64,
) -> Result<Vec<ClientData>> {
    if num_clients == 0 {
        return Err(Error::InvalidConfig("at least one client is required".into()));
    }
    if !(heterogeneity.is_finite() && heterogeneity >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "heterogeneity must be nonnegative, got {heterogeneity}"
        )));
    }
    let shared_rng = &mut RandomStream::derive(seed, u64::MAX, 0);
    let shared_diag: Vec<f64> = (0..9).map(|_| curvature(shared_rng)).collect();
    let mut clients = Vec::with_capacity(num_clients);
    for id in 0..num_clients {
        let mut rng = RandomStream::derive(seed, u64::MAX, 1 + id as u64);
        let diag: Vec<f64> = if heterogeneity == 0.0 {
            shared_diag.clone()
        } else {
            (0..9).map(|_| curvature(&mut rng)).collect()
        };
        let b: Vec<f64> = (0..9)
            .map(|_| 1.0 + heterogeneity * rng.standard_normal())
            .collect();
        let spec = QuadraticSpec {
            m: DenseMatrix::from_diagonal(&diag)?,
            b,
            reshape: (3, 3),
        };
        clients.push(ClientData {
            client_id: id,
            objective: Arc::new(make_quadratic(spec)?),
        });
    }
    Ok(clients)
}

fn curvature(rng: &mut RandomStream) -> f64 {
    let z = rng.standard_normal();
    1.0 + (z * z).min(9.0)
}
