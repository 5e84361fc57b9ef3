//! Flat key=value configuration with typed accessors.
//!
//! Config files are plain text: one `key=value` per line, `#` comments,
//! blank lines ignored, later duplicates win. The same representation is
//! used for `--set key=value` overrides and for printing the resolved
//! configuration before a run.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::optimizers::{InnerSolver, Method};
use crate::sketch::{SketchDistribution, SketchSide};

/// An ordered string-to-string map with typed getters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvConfig {
    entries: BTreeMap<String, String>,
}

impl KvConfig {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses the line-oriented text form.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = KvConfig::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Parse(format!("line {}: expected key=value, got '{line}'", idx + 1))
            })?;
            cfg.set(k.trim(), v.trim());
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }

    pub fn set(&mut self, key: &str, value: impl fmt::Display) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    /// Applies `key=value` override pairs, e.g. from repeated `--set` flags.
    pub fn apply_overrides<'a, I: IntoIterator<Item = &'a str>>(&mut self, pairs: I) -> Result<()> {
        for pair in pairs {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("override '{pair}' is not key=value")))?;
            self.set(k.trim(), v.trim());
        }
        Ok(())
    }

    fn typed<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| {
                Error::InvalidConfig(format!("key '{key}': cannot parse '{v}'"))
            }),
        }
    }

    fn required<T: FromStr>(&self, key: &str) -> Result<T> {
        self.typed(key)?
            .ok_or_else(|| Error::InvalidConfig(format!("missing required key '{key}'")))
    }

    pub fn get_f64(&self, key: &str) -> Result<Option<f64>> {
        self.typed(key)
    }

    pub fn get_usize(&self, key: &str) -> Result<Option<usize>> {
        self.typed(key)
    }

    pub fn get_u64(&self, key: &str) -> Result<Option<u64>> {
        self.typed(key)
    }

    pub fn get_bool(&self, key: &str) -> Result<Option<bool>> {
        self.typed(key)
    }

    pub fn require_f64(&self, key: &str) -> Result<f64> {
        self.required(key)
    }

    pub fn require_usize(&self, key: &str) -> Result<usize> {
        self.required(key)
    }

    /// Renders the resolved configuration, keys sorted, one per line.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push('=');
            out.push_str(v);
            out.push('\n');
        }
        out
    }
}

/// A fully resolved single-method experiment: which objective, which
/// chain settings, and which seeds to run.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub objective: String,
    pub method: Method,
    pub chain_length: usize,
    pub step_gamma: f64,
    pub rank: usize,
    pub alpha: f64,
    pub side: SketchSide,
    pub distribution: SketchDistribution,
    pub inner: InnerSolver,
    pub seeds: Vec<u64>,
    pub stop_gap: Option<f64>,
    pub cola_inner_steps: usize,
}

impl ExperimentConfig {
    /// Baseline settings: single-seed rank-1 left Gaussian RAC chain.
    pub fn new(objective: &str, method: Method, chain_length: usize, step_gamma: f64) -> Self {
        ExperimentConfig {
            objective: objective.to_string(),
            method,
            chain_length,
            step_gamma,
            rank: 1,
            alpha: 1.0,
            side: SketchSide::Left,
            distribution: SketchDistribution::GaussianStd,
            inner: InnerSolver::GdOneStep,
            seeds: vec![0],
            stop_gap: None,
            cola_inner_steps: 5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("seed list is empty".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(Error::InvalidConfig("seed list contains duplicates".into()));
        }
        if self.chain_length == 0 {
            return Err(Error::InvalidConfig("chain_length must be positive".into()));
        }
        Ok(())
    }

    /// Reads an experiment from a parsed key=value map.
    ///
    /// Recognized keys: objective, method, chain_length, gamma, rank,
    /// alpha, side, distribution, inner, sgd_steps, seeds (comma list),
    /// stop_gap, cola_inner_steps. Unknown keys are rejected.
    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        const KNOWN: [&str; 12] = [
            "objective",
            "method",
            "chain_length",
            "gamma",
            "rank",
            "alpha",
            "side",
            "distribution",
            "inner",
            "sgd_steps",
            "seeds",
            "stop_gap",
        ];
        for key in kv.entries.keys() {
            if !KNOWN.contains(&key.as_str()) && key != "cola_inner_steps" {
                return Err(Error::InvalidConfig(format!("unknown key '{key}'")));
            }
        }
        let objective = kv
            .get("objective")
            .ok_or_else(|| Error::InvalidConfig("missing required key 'objective'".into()))?;
        let method: Method = kv
            .get("method")
            .unwrap_or("rac-lora")
            .parse()
            .map_err(|e: Error| e)?;
        let mut exp = ExperimentConfig::new(
            objective,
            method,
            kv.get_usize("chain_length")?.unwrap_or(1000),
            kv.require_f64("gamma")?,
        );
        if let Some(r) = kv.get_usize("rank")? {
            exp.rank = r;
        }
        if let Some(a) = kv.get_f64("alpha")? {
            exp.alpha = a;
        }
        if let Some(s) = kv.get("side") {
            exp.side = s.parse()?;
        }
        if let Some(d) = kv.get("distribution") {
            exp.distribution = d.parse()?;
        }
        match kv.get("inner") {
            None | Some("gd") => {}
            Some("rr") => exp.inner = InnerSolver::RrOnePass,
            Some("sgd") => {
                exp.inner = InnerSolver::Sgd {
                    sampler: crate::optimizers::GradientSampler::FullGradient,
                    steps: kv.get_usize("sgd_steps")?.unwrap_or(1),
                }
            }
            Some(other) => {
                return Err(Error::InvalidConfig(format!(
                    "unknown inner solver '{other}' (expected gd, rr, or sgd)"
                )))
            }
        }
        if let Some(list) = kv.get("seeds") {
            exp.seeds = parse_seed_list(list)?;
        }
        exp.stop_gap = kv.get_f64("stop_gap")?;
        if let Some(k) = kv.get_usize("cola_inner_steps")? {
            exp.cola_inner_steps = k;
        }
        exp.validate()?;
        Ok(exp)
    }

    /// Renders the fully resolved experiment as a key=value block.
    pub fn to_kv(&self) -> KvConfig {
        let mut kv = KvConfig::new();
        kv.set("objective", &self.objective);
        kv.set("method", self.method);
        kv.set("chain_length", self.chain_length);
        kv.set("gamma", self.step_gamma);
        kv.set("rank", self.rank);
        kv.set("alpha", self.alpha);
        kv.set("side", self.side);
        kv.set("distribution", self.distribution);
        kv.set("inner", &self.inner);
        if let InnerSolver::Sgd { steps, .. } = self.inner {
            kv.set("sgd_steps", steps);
        }
        kv.set(
            "seeds",
            self.seeds
                .iter()
                .map(|s| s.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        if let Some(g) = self.stop_gap {
            kv.set("stop_gap", g);
        }
        if self.method == Method::Cola {
            kv.set("cola_inner_steps", self.cola_inner_steps);
        }
        kv
    }
}

/// Parses a comma-separated list of seeds, or `start..end` ranges.
pub fn parse_seed_list(text: &str) -> Result<Vec<u64>> {
    let mut seeds = Vec::new();
    for part in text.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        if let Some((lo, hi)) = part.split_once("..") {
            let lo: u64 = lo
                .trim()
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("bad seed range start '{lo}'")))?;
            let hi: u64 = hi
                .trim()
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("bad seed range end '{hi}'")))?;
            if hi <= lo {
                return Err(Error::InvalidConfig(format!("empty seed range '{part}'")));
            }
            seeds.extend(lo..hi);
        } else {
            seeds.push(
                part.parse()
                    .map_err(|_| Error::InvalidConfig(format!("bad seed '{part}'")))?,
            );
        }
    }
    if seeds.is_empty() {
        return Err(Error::InvalidConfig("seed list is empty".into()));
    }
    Ok(seeds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_skips_comments_and_last_duplicate_wins() {
        let kv = KvConfig::parse("# a comment\n\ngamma=0.1\nrank = 2\ngamma=0.05\n").unwrap();
        assert_eq!(kv.get("gamma"), Some("0.05"));
        assert_eq!(kv.get_usize("rank").unwrap(), Some(2));
        assert_eq!(kv.get("missing"), None);
    }

    #[test]
    fn render_is_sorted_and_reparses_to_the_same_map() {
        let mut kv = KvConfig::new();
        kv.set("zeta", 1);
        kv.set("alpha", "x");
        let text = kv.render();
        assert!(text.starts_with("alpha=x\n"));
        assert_eq!(KvConfig::parse(&text).unwrap(), kv);
    }

    #[test]
    fn typed_getters_reject_garbage() {
        let kv = KvConfig::parse("gamma=fast\n").unwrap();
        assert!(kv.get_f64("gamma").is_err());
        assert!(kv.require_f64("absent").is_err());
    }

    #[test]
    fn overrides_replace_values() {
        let mut kv = KvConfig::parse("gamma=0.1\n").unwrap();
        kv.apply_overrides(["gamma=0.2", "rank=4"]).unwrap();
        assert_eq!(kv.get("gamma"), Some("0.2"));
        assert_eq!(kv.get("rank"), Some("4"));
        assert!(kv.apply_overrides(["nonsense"]).is_err());
    }

    #[test]
    fn experiment_config_round_trips_through_kv() {
        let text = "objective=quad9\nmethod=cola\nchain_length=50\ngamma=0.005\nrank=2\nseeds=1,2,3\n";
        let exp = ExperimentConfig::from_kv(&KvConfig::parse(text).unwrap()).unwrap();
        assert_eq!(exp.method, Method::Cola);
        assert_eq!(exp.seeds, vec![1, 2, 3]);
        assert_eq!(exp.rank, 2);
        let again = ExperimentConfig::from_kv(&exp.to_kv()).unwrap();
        assert_eq!(again.seeds, exp.seeds);
        assert_eq!(again.step_gamma, exp.step_gamma);
    }

    #[test]
    fn bad_experiment_configs_are_rejected() {
        let missing_gamma = KvConfig::parse("objective=quad9\n").unwrap();
        assert!(ExperimentConfig::from_kv(&missing_gamma).is_err());
        let unknown = KvConfig::parse("objective=quad9\ngamma=0.1\nturbo=yes\n").unwrap();
        assert!(ExperimentConfig::from_kv(&unknown).is_err());
        let dup_seeds =
            KvConfig::parse("objective=quad9\ngamma=0.1\nseeds=1,1\n").unwrap();
        assert!(ExperimentConfig::from_kv(&dup_seeds).is_err());
    }

    #[test]
    fn seed_lists_support_ranges() {
        assert_eq!(parse_seed_list("0..4").unwrap(), vec![0, 1, 2, 3]);
        assert_eq!(parse_seed_list("7, 9..11").unwrap(), vec![7, 9, 10]);
        assert!(parse_seed_list("5..5").is_err());
        assert!(parse_seed_list("").is_err());
    }
}
