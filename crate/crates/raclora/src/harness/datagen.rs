//! Reproducible synthetic datasets for the regression objectives.
//!
//! Files are CSV with a `#`-prefixed key=value header carrying everything
//! needed to rebuild a [`RegressionSpec`]; each data row is the target
//! followed by the features. Generation is a pure function of the seed, so
//! re-running produces byte-identical files.

use std::fmt;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::objectives::RegressionSpec;
use crate::rng::RandomStream;

/// Dataset presets understood by `gen-data`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataPreset {
    /// Linear-regression pair: a pretraining split and a smaller
    /// fine-tuning split drawn from an independent ground truth.
    Linreg,
    /// Binary classification split with ridge-regularized logistic loss.
    Logreg,
}

impl fmt::Display for DataPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DataPreset::Linreg => "linreg",
            DataPreset::Logreg => "logreg",
        })
    }
}

impl FromStr for DataPreset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linreg" => Ok(DataPreset::Linreg),
            "logreg" => Ok(DataPreset::Logreg),
            other => Err(Error::Parse(format!("unknown data preset '{other}'"))),
        }
    }
}

struct SplitParams {
    kind: &'static str,
    file: &'static str,
    samples: usize,
    dim: usize,
    reg_lambda: f64,
    reshape: (usize, usize),
    noise: f64,
}

impl DataPreset {
    fn splits(&self) -> Vec<SplitParams> {
        match self {
            DataPreset::Linreg => vec![
                SplitParams {
                    kind: "linreg",
                    file: "linreg_pretrain.csv",
                    samples: 3000,
                    dim: 100,
                    reg_lambda: 1e-4,
                    reshape: (10, 10),
                    noise: 0.01,
                },
                SplitParams {
                    kind: "linreg",
                    file: "linreg_finetune.csv",
                    samples: 1000,
                    dim: 100,
                    reg_lambda: 1e-4,
                    reshape: (10, 10),
                    noise: 0.01,
                },
            ],
            DataPreset::Logreg => vec![SplitParams {
                kind: "logreg",
                file: "logreg_train.csv",
                samples: 2000,
                dim: 100,
                reg_lambda: 0.1,
                reshape: (10, 10),
                noise: 0.25,
            }],
        }
    }
}

/// Writes the preset's dataset files under `dir`, one per split, and
/// returns their paths. Each split uses an independent ground-truth
/// parameter drawn from its own derived stream.
pub fn gen_synthetic(preset: DataPreset, dir: &Path, seed: u64) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut paths = Vec::new();
    for (idx, split) in preset.splits().iter().enumerate() {
        let mut rng = RandomStream::derive(seed, idx as u64, preset as u64);
        let text = render_split(split, seed, &mut rng);
        let path = dir.join(split.file);
        fs::write(&path, text)?;
        paths.push(path);
    }
    Ok(paths)
}

fn render_split(p: &SplitParams, seed: u64, rng: &mut RandomStream) -> String {
    let scale = 1.0 / (p.dim as f64).sqrt();
    let w_true: Vec<f64> = (0..p.dim).map(|_| rng.standard_normal() * scale).collect();
    let mut out = String::new();
    let _ = writeln!(out, "# kind={}", p.kind);
    let _ = writeln!(out, "# samples={}", p.samples);
    let _ = writeln!(out, "# dim={}", p.dim);
    let _ = writeln!(out, "# reg_lambda={}", p.reg_lambda);
    let _ = writeln!(out, "# reshape_rows={}", p.reshape.0);
    let _ = writeln!(out, "# reshape_cols={}", p.reshape.1);
    let _ = writeln!(out, "# seed={seed}");
    for _ in 0..p.samples {
        let x: Vec<f64> = (0..p.dim).map(|_| rng.standard_normal()).collect();
        let signal: f64 = x.iter().zip(&w_true).map(|(a, b)| a * b).sum();
        let y = match p.kind {
            "linreg" => signal + p.noise * rng.standard_normal(),
            _ => {
                let z = signal + p.noise * rng.standard_normal();
                if z >= 0.0 {
                    1.0
                } else {
                    -1.0
                }
            }
        };
        let _ = write!(out, "{y}");
        for v in &x {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

/// Reads a dataset file back into a [`RegressionSpec`], returning the
/// spec together with its declared kind (`linreg` or `logreg`).
pub fn load_regression_csv(path: &Path) -> Result<(RegressionSpec, String)> {
    let text = fs::read_to_string(path)?;
    parse_regression_csv(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

fn parse_regression_csv(text: &str) -> Result<(RegressionSpec, String)> {
    let mut kind = None;
    let mut samples = None;
    let mut dim = None;
    let mut reg_lambda = None;
    let mut rows_cols = (None, None);
    let mut x = Vec::new();
    let mut y = Vec::new();
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix("# ") {
            let (k, v) = rest
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("malformed header line '{line}'")))?;
            match k {
                "kind" => kind = Some(v.to_string()),
                "samples" => samples = Some(parse_num::<usize>(v, k)?),
                "dim" => dim = Some(parse_num::<usize>(v, k)?),
                "reg_lambda" => reg_lambda = Some(parse_num::<f64>(v, k)?),
                "reshape_rows" => rows_cols.0 = Some(parse_num::<usize>(v, k)?),
                "reshape_cols" => rows_cols.1 = Some(parse_num::<usize>(v, k)?),
                "seed" => {}
                other => return Err(Error::Parse(format!("unknown header key '{other}'"))),
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let d = dim.ok_or_else(|| Error::Parse("data row before dim header".into()))?;
        let mut fields = line.split(',');
        y.push(parse_num::<f64>(
            fields.next().ok_or_else(|| Error::Parse("empty row".into()))?,
            "y",
        )?);
        let mut count = 0;
        for field in fields {
            x.push(parse_num::<f64>(field, "x")?);
            count += 1;
        }
        if count != d {
            return Err(Error::Parse(format!(
                "row has {count} features, header says {d}"
            )));
        }
    }
    let kind = kind.ok_or_else(|| Error::Parse("missing kind header".into()))?;
    let dim = dim.ok_or_else(|| Error::Parse("missing dim header".into()))?;
    let n = y.len();
    if Some(n) != samples {
        return Err(Error::Parse(format!(
            "found {n} rows, header says {samples:?}"
        )));
    }
    let spec = RegressionSpec {
        x: DenseMatrix::from_row_major(n, dim, &x)?,
        y,
        reg_lambda: reg_lambda.ok_or_else(|| Error::Parse("missing reg_lambda header".into()))?,
        reshape: (
            rows_cols.0.ok_or_else(|| Error::Parse("missing reshape_rows header".into()))?,
            rows_cols.1.ok_or_else(|| Error::Parse("missing reshape_cols header".into()))?,
        ),
    };
    Ok((spec, kind))
}

fn parse_num<T: FromStr>(s: &str, what: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::Parse(format!("cannot parse {what} from '{s}'")))
}
