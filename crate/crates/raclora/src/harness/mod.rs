//! Experiment harness: trace persistence, key=value configs, synthetic
//! data generation, preset experiments, and summary tables.
//!
//! Everything the CLI does is a thin wrapper over this module, so library
//! users can drive the same experiments programmatically.

mod config;
mod datagen;
mod experiments;
mod summary;
mod trace;

pub use config::{parse_seed_list, ExperimentConfig, KvConfig};
pub use datagen::{gen_synthetic, load_regression_csv, DataPreset};
pub use experiments::{
    build_objective, counterexample_gammas, counterexample_suite, fed_quadratic_scenario,
    rank_sweep, run_experiment, CounterexampleOutcome, ObjectiveChoice, RankSweepRow,
    COLA_INNER_STEPS,
};
pub use summary::{summarize, MethodSummary, SummaryOptions, SummaryTable};
pub use trace::{TraceFile, TraceHeader, TRACE_COLUMNS};
