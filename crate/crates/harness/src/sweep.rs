use std::path::Path;

use serde_json::Value;

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::runner::{run, RunReport};

pub struct SweepPoint {
    pub value: Value,
    pub report: RunReport,
}

fn label(value: &Value) -> String {
    match value {
        Value::String(s) => s.clone(),
        v => v.to_string(),
    }
}

/// One full run per value under `dir/<param>=<value>`, plus `dir/sweep.csv`
/// with every summary statistic against the value.
pub fn sweep(cfg: &ExperimentConfig, param: &str, values: &[Value], dir: &Path, jobs: usize) -> Result<Vec<SweepPoint>> {
    if values.is_empty() {
        return Err(HarnessError::config("--values", "empty value list"));
    }
    let configs = values.iter().map(|v| cfg.with_param(param, v)).collect::<Result<Vec<_>>>()?;
    let mut points = Vec::new();
    for (value, c) in values.iter().zip(configs) {
        let sub = dir.join(format!("{param}={}", label(value)).replace(['/', '\\'], "_"));
        points.push(SweepPoint { value: value.clone(), report: run(&c, &sub, jobs)? });
    }
    let path = dir.join("sweep.csv");
    let io = |e: csv::Error| HarnessError::io(&path, e.into());
    let mut w = csv::Writer::from_path(&path).map_err(io)?;
    w.write_record(["param", "value", "method", "n", "metric", "mean", "std"]).map_err(io)?;
    for p in &points {
        for row in &p.report.summary {
            for (metric, mean, std) in &row.stats {
                w.write_record([param, &label(&p.value), &row.method, &row.n.to_string(), metric, &mean.to_string(), &std.to_string()])
                    .map_err(io)?;
            }
        }
    }
    w.flush().map_err(|e| HarnessError::io(&path, e))?;
    Ok(points)
}

/// Method columns of `metric` means, one row per value.
pub fn format_sweep(param: &str, metric: &str, points: &[SweepPoint]) -> String {
    let Some(first) = points.first() else { return String::new() };
    let mut out = format!("{metric} vs {param}\n{:>10}", param);
    for row in &first.report.summary {
        out.push_str(&format!(" {:>14}", row.method));
    }
    out.push('\n');
    for p in points {
        out.push_str(&format!("{:>10}", label(&p.value)));
        for row in &p.report.summary {
            let mean = row.stats.iter().find(|s| s.0 == metric).map_or(f64::NAN, |s| s.1);
            out.push_str(&format!(" {mean:>14.4}"));
        }
        out.push('\n');
    }
    out
}
