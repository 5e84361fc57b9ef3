//! Per-method summary tables over collections of trace files.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};

use super::trace::TraceFile;

/// Knobs for [`summarize`].
#[derive(Debug, Clone)]
pub struct SummaryOptions {
    /// Gap level for the iterations-to-threshold column.
    pub threshold: f64,
    /// PL constant of the shared objective, enabling the per-run gap
    /// contraction margin when set.
    pub pl_mu: Option<f64>,
}

impl Default for SummaryOptions {
    fn default() -> Self {
        SummaryOptions {
            threshold: 1e-6,
            pl_mu: None,
        }
    }
}

/// Aggregates for one method across its traces.
#[derive(Debug, Clone)]
pub struct MethodSummary {
    pub method: String,
    pub runs: usize,
    pub diverged_runs: usize,
    /// Mean/std of the final gap over non-diverged runs, when gaps were
    /// recorded.
    pub mean_final_gap: Option<f64>,
    pub std_final_gap: Option<f64>,
    pub mean_final_grad_norm_sq: Option<f64>,
    pub std_final_grad_norm_sq: Option<f64>,
    /// How many runs reached the threshold gap, and the mean step at which
    /// they first did.
    pub attained_threshold: usize,
    pub mean_iters_to_threshold: Option<f64>,
    /// Mean over runs of observed/bound for the averaged-stationarity
    /// guarantee `(1/T) sum |grad|^2 <= 2 gap0 / (lambda gamma T)`; at most
    /// 1 when the guarantee holds. Only reported for methods whose merged
    /// update is a projected gradient step.
    pub stationarity_margin: Option<f64>,
    /// Mean over runs of observed/bound for the expected-gap contraction
    /// `gap(T)/gap(0) <= (1 - gamma mu lambda)^T`; needs `pl_mu`. Measured
    /// at the last step where the gap still exceeds 1e-12 of its starting
    /// value, before floating-point rounding floors the observed gap.
    pub contraction_margin: Option<f64>,
}

/// The whole table.
#[derive(Debug, Clone)]
pub struct SummaryTable {
    pub objective: String,
    pub threshold: f64,
    pub rows: Vec<MethodSummary>,
}

fn mean_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (Some(mean), Some(0.0));
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (Some(mean), Some(var.sqrt()))
}

/// Methods whose merged update is `W - gamma H grad f` with a freshly
/// sampled projector, so the expected-projector guarantees apply.
fn bounds_apply(method: &str) -> bool {
    matches!(method, "rac-lora" | "fpft" | "fed-rac-lora")
}

/// Builds the per-method table. All traces must share one objective.
pub fn summarize(traces: &[TraceFile], opts: &SummaryOptions) -> Result<SummaryTable> {
    if traces.is_empty() {
        return Err(Error::InvalidConfig("no traces to summarize".into()));
    }
    let objective = traces[0].header.objective.clone();
    for t in traces {
        if t.header.objective != objective {
            return Err(Error::InvalidConfig(format!(
                "mixed objectives: '{}' and '{}'",
                objective, t.header.objective
            )));
        }
        if t.records.is_empty() {
            return Err(Error::InvalidSpec("empty trace".into()));
        }
    }

    let mut groups: BTreeMap<&str, Vec<&TraceFile>> = BTreeMap::new();
    for t in traces {
        groups.entry(&t.header.method).or_default().push(t);
    }

    let mut rows = Vec::new();
    for (method, group) in groups {
        let mut final_gaps = Vec::new();
        let mut final_gns = Vec::new();
        let mut iters = Vec::new();
        let mut stat_margins = Vec::new();
        let mut contr_margins = Vec::new();
        let mut diverged_runs = 0;
        for t in &group {
            if t.header.diverged {
                diverged_runs += 1;
                continue;
            }
            let last = t.records.last().expect("checked non-empty");
            if let Some(g) = last.gap {
                final_gaps.push(g);
            }
            final_gns.push(last.grad_norm_sq);
            if let Some(first) = t
                .records
                .iter()
                .find(|r| r.gap.is_some_and(|g| g <= opts.threshold))
            {
                iters.push(first.step as f64);
            }
            if bounds_apply(method) {
                append_margins(t, opts.pl_mu, &mut stat_margins, &mut contr_margins);
            }
        }
        let (mean_final_gap, std_final_gap) = mean_std(&final_gaps);
        let (mean_final_grad_norm_sq, std_final_grad_norm_sq) = mean_std(&final_gns);
        let attained_threshold = iters.len();
        let (mean_iters_to_threshold, _) = mean_std(&iters);
        rows.push(MethodSummary {
            method: method.to_string(),
            runs: group.len(),
            diverged_runs,
            mean_final_gap,
            std_final_gap,
            mean_final_grad_norm_sq,
            std_final_grad_norm_sq,
            attained_threshold,
            mean_iters_to_threshold,
            stationarity_margin: mean_std(&stat_margins).0,
            contraction_margin: mean_std(&contr_margins).0,
        });
    }
    Ok(SummaryTable {
        objective,
        threshold: opts.threshold,
        rows,
    })
}

/// Observed/bound ratios for one non-diverged trace. `T` is the last
/// recorded step; the stationarity average runs over steps `0..T`.
fn append_margins(t: &TraceFile, pl_mu: Option<f64>, stat: &mut Vec<f64>, contr: &mut Vec<f64>) {
    let lambda = t.header.lambda_min_h;
    let gamma = t.header.gamma;
    let horizon = t.records.last().map(|r| r.step).unwrap_or(0);
    if horizon == 0 || lambda <= 0.0 || gamma <= 0.0 {
        return;
    }
    let gap0 = match t.records[0].gap {
        Some(g) if g > 0.0 => g,
        _ => return,
    };
    let pre: Vec<&_> = t.records.iter().filter(|r| r.step < horizon).collect();
    let mean_gns = pre.iter().map(|r| r.grad_norm_sq).sum::<f64>() / pre.len() as f64;
    let stat_bound = 2.0 * gap0 / (lambda * gamma * horizon as f64);
    stat.push(mean_gns / stat_bound);
    if let Some(mu) = pl_mu {
        let rate = 1.0 - gamma * mu * lambda;
        let floor = 1e-12 * gap0;
        let last_above = t
            .records
            .iter()
            .rev()
            .find(|r| r.gap.is_some_and(|g| g > floor));
        if let Some(r) = last_above {
            if rate > 0.0 && r.step > 0 {
                let bound = rate.powi(r.step as i32);
                contr.push((r.gap.expect("filtered on gap") / gap0) / bound);
            }
        }
    }
}

impl SummaryTable {
    /// Renders an aligned text table, one row per method.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "objective: {}   (threshold gap {})",
            self.objective, self.threshold
        );
        let _ = writeln!(
            out,
            "{:<12} {:>5} {:>5} {:>12} {:>12} {:>12} {:>12} {:>10} {:>10} {:>10}",
            "method",
            "runs",
            "div",
            "gap_mean",
            "gap_std",
            "gns_mean",
            "gns_std",
            "iters",
            "stat_mrg",
            "rate_mrg"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<12} {:>5} {:>5} {:>12} {:>12} {:>12} {:>12} {:>10} {:>10} {:>10}",
                r.method,
                r.runs,
                r.diverged_runs,
                fm(r.mean_final_gap),
                fm(r.std_final_gap),
                fm(r.mean_final_grad_norm_sq),
                fm(r.std_final_grad_norm_sq),
                fm(r.mean_iters_to_threshold),
                fm(r.stationarity_margin),
                fm(r.contraction_margin)
            );
        }
        out
    }
}

fn fm(v: Option<f64>) -> String {
    match v {
        None => "-".to_string(),
        Some(x) => format!("{x:.3e}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{run_experiment, ExperimentConfig};
    use crate::optimizers::Method;

    #[test]
    fn single_trace_reports_its_own_final_row() {
        let mut exp = ExperimentConfig::new("quad9", Method::Fpft, 40, 0.05);
        exp.seeds = vec![9];
        let traces = run_experiment(&exp, None, None).unwrap();
        let table = summarize(&traces, &SummaryOptions::default()).unwrap();
        assert_eq!(table.rows.len(), 1);
        let row = &table.rows[0];
        assert_eq!(row.method, "fpft");
        assert_eq!(row.runs, 1);
        assert_eq!(row.diverged_runs, 0);
        let last = traces[0].records.last().unwrap();
        assert_eq!(row.mean_final_gap.unwrap(), last.gap.unwrap());
        assert_eq!(row.std_final_gap.unwrap(), 0.0);
        assert_eq!(row.mean_final_grad_norm_sq.unwrap(), last.grad_norm_sq);
    }

    #[test]
    fn twenty_chained_seeds_average_below_1e10() {
        let mut exp = ExperimentConfig::new("quad9", Method::RacLora, 900, 0.05);
        exp.seeds = (0..20).collect();
        let traces = run_experiment(&exp, None, None).unwrap();
        let table = summarize(&traces, &SummaryOptions { threshold: 1e-10, pl_mu: Some(2.0) })
            .unwrap();
        let row = &table.rows[0];
        assert_eq!(row.runs, 20);
        assert_eq!(row.diverged_runs, 0);
        assert!(
            row.mean_final_gap.unwrap() <= 1e-10,
            "mean final gap {}",
            row.mean_final_gap.unwrap()
        );
        assert_eq!(row.attained_threshold, 20);
        assert!(row.mean_iters_to_threshold.unwrap() > 100.0);
        // The guarantees are on the expectation; per-run ratios get the
        // same slack the rate checks use.
        assert!(row.stationarity_margin.unwrap() <= 1.15);
        assert!(row.contraction_margin.unwrap() <= 1.0);
    }

    #[test]
    fn divergent_traces_populate_the_count_column() {
        // Full gradient descent at gamma = 1/(2L) converges; at gamma = 1
        // with L = 20 it blows up deterministically.
        let mut good = ExperimentConfig::new("quad9", Method::Fpft, 50, 0.025);
        good.seeds = vec![0];
        let mut bad = ExperimentConfig::new("quad9", Method::Fpft, 50, 1.0);
        bad.seeds = vec![1, 2];
        let mut traces = run_experiment(&good, None, None).unwrap();
        traces.extend(run_experiment(&bad, None, None).unwrap());
        let table = summarize(&traces, &SummaryOptions::default()).unwrap();
        let row = &table.rows[0];
        assert_eq!(row.runs, 3);
        assert_eq!(row.diverged_runs, 2);
        assert!(table.render().contains("fpft"));
    }

    #[test]
    fn mixed_objectives_are_rejected() {
        let mut a = ExperimentConfig::new("quad9", Method::Fpft, 10, 0.05);
        a.seeds = vec![1];
        let mut traces = run_experiment(&a, None, None).unwrap();
        let mut other = traces[0].clone();
        other.header.objective = "linreg".into();
        traces.push(other);
        assert!(matches!(
            summarize(&traces, &SummaryOptions::default()),
            Err(Error::InvalidConfig(_))
        ));
        assert!(summarize(&[], &SummaryOptions::default()).is_err());
    }
}
