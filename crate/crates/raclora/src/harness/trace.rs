//! Trace persistence: one CSV file per run, plot-ready and diffable.
//!
//! The format is a `#`-prefixed key=value header block followed by a fixed
//! six-column CSV body. Floats are written with Rust's shortest
//! round-tripping representation, which makes write -> read -> write
//! byte-identical.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::federated::{FedConfig, FedRun, FED_METHOD_TAG};
use crate::optimizers::{ChainConfig, ChainRun, Method, TraceRecord};

/// The exact column list of the CSV body.
pub const TRACE_COLUMNS: &str = "step,f,grad_norm_sq,gap,seed,method";

const HEADER_KEYS: [&str; 8] = [
    "method",
    "objective",
    "gamma",
    "rank",
    "alpha",
    "lambda_min_h",
    "seed",
    "diverged",
];

/// Run-level metadata stored in the `#` block.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceHeader {
    pub method: String,
    pub objective: String,
    pub gamma: f64,
    pub rank: usize,
    pub alpha: f64,
    /// Closed-form smallest expected-projector eigenvalue of the sketch
    /// spec the run used.
    pub lambda_min_h: f64,
    pub seed: u64,
    pub diverged: bool,
}

/// A run trace plus its header, as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceFile {
    pub header: TraceHeader,
    pub records: Vec<TraceRecord>,
}

impl TraceFile {
    /// Packages a chain run for persistence.
    pub fn from_run(run: &ChainRun, cfg: &ChainConfig, objective: &str) -> Self {
        let lambda = match cfg.method {
            Method::Fpft => 1.0,
            _ => cfg.sketch.isotropic_lambda_min(),
        };
        TraceFile {
            header: TraceHeader {
                method: cfg.method.tag().to_string(),
                objective: objective.to_string(),
                gamma: cfg.step_gamma,
                rank: cfg.sketch.rank,
                alpha: cfg.sketch.alpha,
                lambda_min_h: lambda,
                seed: cfg.seed,
                diverged: run.diverged,
            },
            records: run.records.clone(),
        }
    }

    /// Packages a federated run for persistence.
    pub fn from_fed_run(run: &FedRun, cfg: &FedConfig, objective: &str) -> Self {
        TraceFile {
            header: TraceHeader {
                method: FED_METHOD_TAG.to_string(),
                objective: objective.to_string(),
                gamma: cfg.local_gamma,
                rank: cfg.sketch.rank,
                alpha: cfg.sketch.alpha,
                lambda_min_h: cfg.sketch.isotropic_lambda_min(),
                seed: cfg.seed,
                diverged: run.diverged,
            },
            records: run.records.clone(),
        }
    }

    /// Checks the ordering invariant: steps strictly ascending.
    pub fn validate(&self) -> Result<()> {
        for pair in self.records.windows(2) {
            if pair[1].step <= pair[0].step {
                return Err(Error::InvalidSpec(format!(
                    "trace steps must ascend, found {} after {}",
                    pair[1].step, pair[0].step
                )));
            }
        }
        Ok(())
    }

    /// Renders the on-disk representation.
    pub fn render(&self) -> String {
        let h = &self.header;
        let mut out = String::new();
        let _ = writeln!(out, "# method={}", h.method);
        let _ = writeln!(out, "# objective={}", h.objective);
        let _ = writeln!(out, "# gamma={}", h.gamma);
        let _ = writeln!(out, "# rank={}", h.rank);
        let _ = writeln!(out, "# alpha={}", h.alpha);
        let _ = writeln!(out, "# lambda_min_h={}", h.lambda_min_h);
        let _ = writeln!(out, "# seed={}", h.seed);
        let _ = writeln!(out, "# diverged={}", h.diverged);
        out.push_str(TRACE_COLUMNS);
        out.push('\n');
        for r in &self.records {
            let gap = match r.gap {
                Some(g) => g.to_string(),
                None => String::new(),
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.step, r.f, r.grad_norm_sq, gap, r.seed, r.method
            );
        }
        out
    }

    /// Parses the on-disk representation.
    pub fn parse(text: &str) -> Result<TraceFile> {
        let mut lines = text.lines().peekable();
        let mut header_vals: Vec<String> = Vec::new();
        for key in HEADER_KEYS {
            let line = lines
                .next()
                .ok_or_else(|| Error::Parse("truncated trace header".into()))?;
            let rest = line
                .strip_prefix("# ")
                .ok_or_else(|| Error::Parse(format!("expected a '# ' header line, got '{line}'")))?;
            let (k, v) = rest
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("malformed header line '{line}'")))?;
            if k != key {
                return Err(Error::Parse(format!(
                    "expected header key '{key}', found '{k}'"
                )));
            }
            header_vals.push(v.to_string());
        }
        let header = TraceHeader {
            method: header_vals[0].clone(),
            objective: header_vals[1].clone(),
            gamma: parse_field(&header_vals[2], "gamma")?,
            rank: parse_field(&header_vals[3], "rank")?,
            alpha: parse_field(&header_vals[4], "alpha")?,
            lambda_min_h: parse_field(&header_vals[5], "lambda_min_h")?,
            seed: parse_field(&header_vals[6], "seed")?,
            diverged: parse_field(&header_vals[7], "diverged")?,
        };

        let cols = lines
            .next()
            .ok_or_else(|| Error::Parse("missing column header".into()))?;
        if cols != TRACE_COLUMNS {
            return Err(Error::Parse(format!(
                "unexpected columns '{cols}', want '{TRACE_COLUMNS}'"
            )));
        }

        let mut records = Vec::new();
        for line in lines {
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != 6 {
                return Err(Error::Parse(format!(
                    "expected 6 fields, got {} in '{line}'",
                    parts.len()
                )));
            }
            records.push(TraceRecord {
                step: parse_field(parts[0], "step")?,
                f: parse_field(parts[1], "f")?,
                grad_norm_sq: parse_field(parts[2], "grad_norm_sq")?,
                gap: if parts[3].is_empty() {
                    None
                } else {
                    Some(parse_field(parts[3], "gap")?)
                },
                seed: parse_field(parts[4], "seed")?,
                method: parts[5].to_string(),
                h_grad_inner: None,
                diverged: false,
            });
        }
        if let Some(last) = records.last_mut() {
            last.diverged = header.diverged;
        }
        let file = TraceFile { header, records };
        file.validate()?;
        Ok(file)
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        self.validate()?;
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, self.render())?;
        Ok(())
    }

    pub fn read_from(path: &Path) -> Result<TraceFile> {
        let text = fs::read_to_string(path)?;
        TraceFile::parse(&text)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }

    /// Stable default filename for a run.
    pub fn default_filename(&self) -> String {
        format!(
            "{}_{}_seed{}.csv",
            self.header.method, self.header.objective, self.header.seed
        )
    }

    pub fn final_record(&self) -> Result<&TraceRecord> {
        self.records
            .last()
            .ok_or_else(|| Error::InvalidSpec("empty trace".into()))
    }
}

fn parse_field<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::Parse(format!("cannot parse {what} from '{s}'")))
}
