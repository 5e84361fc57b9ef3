//! Command-line front end over the library's experiment harness.
//!
//! Every subcommand prints its fully resolved configuration before doing
//! any work; identical printed configs produce identical outputs. Exit
//! codes: 0 success, 2 configuration error, 3 divergence (only with
//! `--fail-on-divergence`), 4 I/O error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use raclora::federated::{run_fed_chain, dissimilarity, FedConfig};
use raclora::harness::{
    counterexample_suite, fed_quadratic_scenario, gen_synthetic, rank_sweep, run_experiment,
    summarize, CounterexampleOutcome, DataPreset, ExperimentConfig, KvConfig, SummaryOptions,
    TraceFile,
};
use raclora::linalg::DenseMatrix;
use raclora::rng::RandomStream;
use raclora::sketch::{estimate_expected_projector, SketchDistribution, SketchSide, SketchSpec};
use raclora::{Error, Result};

#[derive(Parser)]
#[command(
    name = "raclora",
    version,
    about = "Chained low-rank optimization experiments on convex objectives"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

/// Seed selection shared by the experiment subcommands. The base seed falls
/// back to the RACLORA_SEED environment variable, then to 0.
#[derive(Args, Clone)]
struct SeedArgs {
    /// Base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of consecutive seeds to run, starting at the base seed.
    #[arg(long)]
    seeds: Option<u64>,
}

impl SeedArgs {
    fn resolve(&self, default_count: u64) -> Result<Vec<u64>> {
        let base = match self.seed {
            Some(s) => s,
            None => match std::env::var("RACLORA_SEED") {
                Ok(v) => v.parse().map_err(|_| {
                    Error::InvalidConfig(format!("RACLORA_SEED='{v}' is not an integer seed"))
                })?,
                Err(_) => 0,
            },
        };
        let count = self.seeds.unwrap_or(default_count);
        if count == 0 {
            return Err(Error::InvalidConfig("--seeds must be at least 1".into()));
        }
        base.checked_add(count - 1)
            .ok_or_else(|| Error::InvalidConfig("seed range overflows u64".into()))?;
        Ok((base..base + count).collect())
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Compare all methods on the 9-dimensional quadratic counterexample.
    Counterexample {
        #[command(flatten)]
        seed_args: SeedArgs,
        /// Inner steps per run for every method.
        #[arg(long, default_value_t = 3000)]
        chain_length: usize,
        /// Directory to write one trace file per cell into.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Exit with code 3 if any run diverged.
        #[arg(long)]
        fail_on_divergence: bool,
    },
    /// Run one configured chain experiment across seeds.
    Run {
        /// Objective: quad9, linreg:PATH, or logreg:PATH.
        #[arg(long)]
        objective: Option<String>,
        /// Optional key=value config file; flags override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        rank: Option<usize>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        chain_length: Option<usize>,
        /// Inner solver: gd, rr, or sgd.
        #[arg(long)]
        inner: Option<String>,
        #[command(flatten)]
        seed_args: SeedArgs,
        /// Final key=value overrides, applied after flags.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        fail_on_divergence: bool,
    },
    /// Fine-tuning rank sweep on the linear-regression preset.
    Sweep {
        /// Directory holding linreg_pretrain.csv and linreg_finetune.csv.
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1,2,5,10")]
        ranks: Vec<usize>,
        /// Gap level whose first-hitting block is counted.
        #[arg(long, default_value_t = 1e-6)]
        threshold: f64,
        #[arg(long, default_value_t = 20000)]
        max_blocks: usize,
        #[command(flatten)]
        seed_args: SeedArgs,
    },
    /// Federated chain over synthetic heterogeneous quadratic clients.
    Fed {
        #[arg(long, default_value_t = 4)]
        clients: usize,
        /// Cohort size per round; defaults to all clients.
        #[arg(long)]
        cohort: Option<usize>,
        /// Spread of the client linear terms.
        #[arg(long, default_value_t = 0.5)]
        heterogeneity: f64,
        /// Server step scale beta.
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        /// Local step size; defaults to the guarantee ceiling in theorem
        /// mode and to 1/(2 L_max) otherwise.
        #[arg(long)]
        gamma: Option<f64>,
        /// Number of rounds.
        #[arg(long, default_value_t = 100)]
        chain_length: usize,
        #[arg(long, default_value_t = 1)]
        rank: usize,
        #[arg(long)]
        alpha: Option<f64>,
        /// Enforce the step-size coupling of the convergence guarantee.
        #[arg(long)]
        theorem_mode: bool,
        #[command(flatten)]
        seed_args: SeedArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        fail_on_divergence: bool,
    },
    /// Monte Carlo check of the expected projector against r/m (or r/n).
    EstimateLambda {
        #[arg(long, default_value_t = 3)]
        rows: usize,
        #[arg(long, default_value_t = 3)]
        cols: usize,
        #[arg(long, default_value_t = 1)]
        rank: usize,
        /// left or right.
        #[arg(long, default_value = "left")]
        side: String,
        /// gaussian, rademacher, or coordinate.
        #[arg(long, default_value = "gaussian")]
        distribution: String,
        #[arg(long, default_value_t = 10000)]
        samples: usize,
        #[command(flatten)]
        seed_args: SeedArgs,
    },
    /// Aggregate trace files into a per-method table.
    Summarize {
        /// Trace files, or directories scanned for *.csv.
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        #[arg(long, default_value_t = 1e-6)]
        threshold: f64,
        /// PL constant of the objective, enabling the contraction margin.
        #[arg(long)]
        pl_mu: Option<f64>,
    },
    /// Write the synthetic datasets for a preset.
    GenData {
        /// linreg or logreg.
        #[arg(long, default_value = "linreg")]
        preset: String,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        seed_args: SeedArgs,
    },
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match dispatch(cli.cmd) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Io(_) => 4u8,
                Error::Divergence { .. } => 3,
                _ => 2,
            })
        }
    }
}

fn print_config(kv: &KvConfig) {
    println!("# resolved config");
    print!("{}", kv.render());
    println!("# end config");
}

fn seeds_value(seeds: &[u64]) -> String {
    seeds.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(",")
}

fn divergence_exit(fail_on_divergence: bool, any_diverged: bool) -> Result<u8> {
    if fail_on_divergence && any_diverged {
        eprintln!("at least one run diverged");
        return Ok(3);
    }
    Ok(0)
}

fn dispatch(cmd: Cmd) -> Result<u8> {
    match cmd {
        Cmd::Counterexample {
            seed_args,
            chain_length,
            out,
            fail_on_divergence,
        } => cmd_counterexample(&seed_args, chain_length, out.as_deref(), fail_on_divergence),
        Cmd::Run {
            objective,
            config,
            method,
            gamma,
            rank,
            alpha,
            chain_length,
            inner,
            seed_args,
            set,
            out,
            fail_on_divergence,
        } => {
            let mut kv = match &config {
                Some(path) => KvConfig::from_file(path)?,
                None => KvConfig::new(),
            };
            if let Some(v) = &objective {
                kv.set("objective", v);
            } else if !kv.contains("objective") {
                kv.set("objective", "quad9");
            }
            if let Some(v) = &method {
                kv.set("method", v);
            }
            if let Some(v) = gamma {
                kv.set("gamma", v);
            }
            if let Some(v) = rank {
                kv.set("rank", v);
            }
            if let Some(v) = alpha {
                kv.set("alpha", v);
            }
            if let Some(v) = chain_length {
                kv.set("chain_length", v);
            }
            if let Some(v) = &inner {
                kv.set("inner", v);
            }
            if seed_args.seed.is_some() || seed_args.seeds.is_some() || !kv.contains("seeds") {
                kv.set("seeds", seeds_value(&seed_args.resolve(1)?));
            }
            if !kv.contains("gamma") {
                kv.set("gamma", 0.05);
            }
            kv.apply_overrides(set.iter().map(String::as_str))?;
            cmd_run(&kv, out.as_deref(), fail_on_divergence)
        }
        Cmd::Sweep {
            data_dir,
            ranks,
            threshold,
            max_blocks,
            seed_args,
        } => cmd_sweep(&data_dir, &ranks, threshold, max_blocks, &seed_args),
        Cmd::Fed {
            clients,
            cohort,
            heterogeneity,
            beta,
            gamma,
            chain_length,
            rank,
            alpha,
            theorem_mode,
            seed_args,
            out,
            fail_on_divergence,
        } => cmd_fed(FedCliArgs {
            clients,
            cohort,
            heterogeneity,
            beta,
            gamma,
            chain_length,
            rank,
            alpha,
            theorem_mode,
            seed_args,
            out,
            fail_on_divergence,
        }),
        Cmd::EstimateLambda {
            rows,
            cols,
            rank,
            side,
            distribution,
            samples,
            seed_args,
        } => cmd_estimate_lambda(rows, cols, rank, &side, &distribution, samples, &seed_args),
        Cmd::Summarize {
            paths,
            threshold,
            pl_mu,
        } => cmd_summarize(&paths, threshold, pl_mu),
        Cmd::GenData {
            preset,
            out,
            seed_args,
        } => cmd_gen_data(&preset, &out, &seed_args),
    }
}

fn cmd_counterexample(
    seed_args: &SeedArgs,
    chain_length: usize,
    out: Option<&Path>,
    fail_on_divergence: bool,
) -> Result<u8> {
    let seeds = seed_args.resolve(20)?;
    let mut kv = KvConfig::new();
    kv.set("command", "counterexample");
    kv.set("chain_length", chain_length);
    kv.set("seeds", seeds_value(&seeds));
    if let Some(dir) = out {
        kv.set("out", dir.display());
    }
    print_config(&kv);

    let outcomes = counterexample_suite(chain_length, &seeds, out)?;
    println!(
        "{:<12} {:>10} {:>5} {:>9} {:>12} {:>12}",
        "method", "gamma", "runs", "diverged", "med_gap", "med_gns"
    );
    let mut cells: Vec<(String, f64)> = Vec::new();
    for o in &outcomes {
        let key = (o.method.tag().to_string(), o.gamma);
        if !cells.contains(&key) {
            cells.push(key);
        }
    }
    for (tag, gamma) in &cells {
        let group: Vec<&CounterexampleOutcome> = outcomes
            .iter()
            .filter(|o| o.method.tag() == tag && o.gamma == *gamma)
            .collect();
        let diverged = group.iter().filter(|o| o.diverged).count();
        let alive: Vec<&&CounterexampleOutcome> =
            group.iter().filter(|o| !o.diverged).collect();
        let med_gap = median(alive.iter().filter_map(|o| o.final_gap));
        let med_gns = median(alive.iter().map(|o| o.final_grad_norm_sq));
        println!(
            "{:<12} {:>10} {:>5} {:>9} {:>12} {:>12}",
            tag,
            gamma,
            group.len(),
            diverged,
            fmt_opt(med_gap),
            fmt_opt(med_gns)
        );
    }
    let restricted = median(
        outcomes
            .iter()
            .filter_map(|o| o.final_restricted_grad_norm),
    );
    if let Some(r) = restricted {
        println!("frozen-sketch median restricted gradient norm: {r:.3e}");
    }
    divergence_exit(fail_on_divergence, outcomes.iter().any(|o| o.diverged))
}

fn cmd_run(kv: &KvConfig, out: Option<&Path>, fail_on_divergence: bool) -> Result<u8> {
    let exp = ExperimentConfig::from_kv(kv)?;
    let mut printed = exp.to_kv();
    printed.set("command", "run");
    if let Some(dir) = out {
        printed.set("out", dir.display());
    }
    print_config(&printed);

    let traces = run_experiment(&exp, None, out)?;
    for t in &traces {
        let last = t.records.last().expect("runs are non-empty");
        println!(
            "seed {:>4}: steps={:<6} f={:<22} gap={:<22} diverged={}",
            t.header.seed,
            last.step,
            last.f,
            fmt_opt(last.gap),
            t.header.diverged
        );
    }
    divergence_exit(fail_on_divergence, traces.iter().any(|t| t.header.diverged))
}

fn cmd_sweep(
    data_dir: &Path,
    ranks: &[usize],
    threshold: f64,
    max_blocks: usize,
    seed_args: &SeedArgs,
) -> Result<u8> {
    let seeds = seed_args.resolve(10)?;
    let mut kv = KvConfig::new();
    kv.set("command", "sweep");
    kv.set("data_dir", data_dir.display());
    kv.set(
        "ranks",
        ranks.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(","),
    );
    kv.set("threshold", threshold);
    kv.set("max_blocks", max_blocks);
    kv.set("seeds", seeds_value(&seeds));
    print_config(&kv);

    let rows = rank_sweep(data_dir, ranks, &seeds, threshold, max_blocks)?;
    let base = rows
        .iter()
        .max_by_key(|r| r.rank)
        .expect("rank list is non-empty");
    let (base_rank, base_iters) = (base.rank, base.mean_iters);
    println!(
        "{:<6} {:>12} {:>14} {:>14}",
        "rank", "mean_iters", "slowdown", "ideal"
    );
    for row in &rows {
        println!(
            "{:<6} {:>12.1} {:>14.3} {:>14.3}",
            row.rank,
            row.mean_iters,
            row.mean_iters / base_iters,
            base_rank as f64 / row.rank as f64
        );
    }
    Ok(0)
}

struct FedCliArgs {
    clients: usize,
    cohort: Option<usize>,
    heterogeneity: f64,
    beta: f64,
    gamma: Option<f64>,
    chain_length: usize,
    rank: usize,
    alpha: Option<f64>,
    theorem_mode: bool,
    seed_args: SeedArgs,
    out: Option<PathBuf>,
    fail_on_divergence: bool,
}

fn cmd_fed(args: FedCliArgs) -> Result<u8> {
    let seeds = args.seed_args.resolve(1)?;
    let scenario_seed = seeds[0];
    let clients = fed_quadratic_scenario(args.clients, args.heterogeneity, scenario_seed)?;
    let l_max = clients
        .iter()
        .map(|c| c.objective.smoothness_l().expect("quadratics expose L"))
        .fold(0.0f64, f64::max);
    let n0 = clients[0].objective.sample_count();
    let sketch = SketchSpec::left_gaussian(args.rank, 3, 3);
    let lambda = sketch.isotropic_lambda_min();
    let gamma = args.gamma.unwrap_or_else(|| {
        if args.theorem_mode {
            (1.0 - lambda) / (4.0 * l_max) / (args.beta * n0 as f64)
        } else {
            1.0 / (2.0 * l_max)
        }
    });
    let cohort = args.cohort.unwrap_or(args.clients);

    let mut kv = KvConfig::new();
    kv.set("command", "fed");
    kv.set("clients", args.clients);
    kv.set("cohort", cohort);
    kv.set("heterogeneity", args.heterogeneity);
    kv.set("beta", args.beta);
    kv.set("gamma", gamma);
    kv.set("chain_length", args.chain_length);
    kv.set("rank", args.rank);
    kv.set("alpha", sketch.alpha);
    kv.set("theorem_mode", args.theorem_mode);
    kv.set("seeds", seeds_value(&seeds));
    if let Some(dir) = &args.out {
        kv.set("out", dir.display());
    }
    print_config(&kv);

    let report = dissimilarity(&clients)?;
    println!("dissimilarity delta_star={:.6e}", report.delta_star);
    for (i, dm) in report.delta_star_m.iter().enumerate() {
        println!("client {i}: f_m*={:.6} delta_star_m={:.3e}", report.client_optima[i], dm);
    }

    let mut any_diverged = false;
    for &seed in &seeds {
        let mut cfg = FedConfig::new(
            args.clients,
            cohort,
            gamma,
            args.beta,
            args.chain_length,
            sketch.clone(),
        );
        if let Some(a) = args.alpha {
            cfg.sketch.alpha = a;
        }
        cfg.seed = seed;
        cfg.theorem_mode = args.theorem_mode;
        let w0 = DenseMatrix::zeros(3, 3);
        let run = run_fed_chain(&clients, &cfg, &w0)?;
        any_diverged |= run.diverged;
        let last = run.records.last().expect("runs are non-empty");
        println!(
            "seed {:>4}: rounds={:<5} global_f={:<22} eta_tilde={} diverged={}",
            seed, run.comm.rounds_completed, last.f, run.eta_tilde, run.diverged
        );
        println!(
            "  comm per round per client: upload {} broadcast {} (full matrix {})",
            run.comm.upload_scalars_per_client,
            run.comm.broadcast_scalars_per_client,
            run.comm.full_matrix_scalars
        );
        if let Some(dir) = &args.out {
            let trace = TraceFile::from_fed_run(&run, &cfg, "fedquad");
            trace.write_to(&dir.join(trace.default_filename()))?;
        }
    }
    divergence_exit(args.fail_on_divergence, any_diverged)
}

fn cmd_estimate_lambda(
    rows: usize,
    cols: usize,
    rank: usize,
    side: &str,
    distribution: &str,
    samples: usize,
    seed_args: &SeedArgs,
) -> Result<u8> {
    let seeds = seed_args.resolve(1)?;
    let side: SketchSide = side.parse()?;
    let distribution: SketchDistribution = distribution.parse()?;
    let spec = SketchSpec {
        side,
        rank,
        target_rows: rows,
        target_cols: cols,
        distribution,
        alpha: rank as f64,
    };
    spec.validate()?;

    let mut kv = KvConfig::new();
    kv.set("command", "estimate-lambda");
    kv.set("rows", rows);
    kv.set("cols", cols);
    kv.set("rank", rank);
    kv.set("side", side);
    kv.set("distribution", distribution);
    kv.set("samples", samples);
    kv.set("seeds", seeds_value(&seeds));
    print_config(&kv);

    let mut rng = RandomStream::from_seed(seeds[0]);
    let est = estimate_expected_projector(&spec, samples, &mut rng)?;
    let closed = spec.isotropic_lambda_min();
    println!("closed-form lambda_min = {closed}");
    println!(
        "estimated lambda_min = {} lambda_max = {} (max entry std err {:.3e}, {} samples)",
        est.lambda_min_hat, est.lambda_max_hat, est.std_err, est.samples
    );
    let dev = (est.lambda_min_hat - closed).abs();
    println!(
        "deviation {:.3e} = {:.2} standard errors",
        dev,
        if est.std_err > 0.0 { dev / est.std_err } else { 0.0 }
    );
    Ok(0)
}

fn cmd_summarize(paths: &[PathBuf], threshold: f64, pl_mu: Option<f64>) -> Result<u8> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut entries: Vec<PathBuf> = std::fs::read_dir(p)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|e| e == "csv"))
                .collect();
            entries.sort();
            files.extend(entries);
        } else {
            files.push(p.clone());
        }
    }

    let mut kv = KvConfig::new();
    kv.set("command", "summarize");
    kv.set("threshold", threshold);
    if let Some(mu) = pl_mu {
        kv.set("pl_mu", mu);
    }
    kv.set("traces", files.len());
    print_config(&kv);

    let traces: Vec<TraceFile> = files
        .iter()
        .map(|p| TraceFile::read_from(p))
        .collect::<Result<_>>()?;
    let table = summarize(&traces, &SummaryOptions { threshold, pl_mu })?;
    print!("{}", table.render());
    Ok(0)
}

fn cmd_gen_data(preset: &str, out: &Path, seed_args: &SeedArgs) -> Result<u8> {
    let seeds = seed_args.resolve(1)?;
    let preset: DataPreset = preset.parse()?;
    let mut kv = KvConfig::new();
    kv.set("command", "gen-data");
    kv.set("preset", preset);
    kv.set("out", out.display());
    kv.set("seeds", seeds_value(&seeds));
    print_config(&kv);
    for path in gen_synthetic(preset, out, seeds[0])? {
        println!("wrote {}", path.display());
    }
    Ok(0)
}

fn median(values: impl Iterator<Item = f64>) -> Option<f64> {
    let mut v: Vec<f64> = values.collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    Some(v[v.len() / 2])
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "-".into())
}
