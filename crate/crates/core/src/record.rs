//! Seeded run traces and their CSV form.
//!
//! Every run writes rows with the fixed columns `run_id,seed,step,metric,value`.
//! Splits are folded into the metric name (`test/accuracy`, `episode/reward`).

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub const CSV_COLUMNS: [&str; 5] = ["run_id", "seed", "step", "metric", "value"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricPoint {
    pub step: u64,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CsvRow {
    run_id: String,
    seed: u64,
    step: u64,
    metric: String,
    value: f64,
}

/// One seeded run: a flat series of `(step, metric, value)` points.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunRecord {
    pub run_id: String,
    pub seed: u64,
    pub points: Vec<MetricPoint>,
}

impl RunRecord {
    pub fn new(run_id: impl Into<String>, seed: u64) -> Self {
        Self { run_id: run_id.into(), seed, points: Vec::new() }
    }

    pub fn push(&mut self, step: u64, metric: &str, value: f64) {
        self.points.push(MetricPoint { step, metric: metric.to_string(), value });
    }

    /// Metric names in first-seen order.
    pub fn metrics(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for p in &self.points {
            if !out.contains(&p.metric.as_str()) {
                out.push(&p.metric);
            }
        }
        out
    }

    pub fn series(&self, metric: &str) -> Vec<(u64, f64)> {
        self.points.iter().filter(|p| p.metric == metric).map(|p| (p.step, p.value)).collect()
    }

    pub fn values(&self, metric: &str) -> Vec<f64> {
        self.points.iter().filter(|p| p.metric == metric).map(|p| p.value).collect()
    }

    /// Last recorded value of `metric`.
    pub fn last(&self, metric: &str) -> Option<f64> {
        self.points.iter().rev().find(|p| p.metric == metric).map(|p| p.value)
    }

    /// Mean of the last `n` values of `metric` (fewer if the series is short).
    pub fn tail_mean(&self, metric: &str, n: usize) -> Option<f64> {
        let v = self.values(metric);
        if v.is_empty() || n == 0 {
            return None;
        }
        let tail = &v[v.len().saturating_sub(n)..];
        Some(tail.iter().sum::<f64>() / tail.len() as f64)
    }

    /// Mean of the first `n` values of `metric`.
    pub fn head_mean(&self, metric: &str, n: usize) -> Option<f64> {
        let v = self.values(metric);
        if v.is_empty() || n == 0 {
            return None;
        }
        let head = &v[..n.min(v.len())];
        Some(head.iter().sum::<f64>() / head.len() as f64)
    }

    /// Writes the header and every point.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_csv(std::slice::from_ref(self), out)
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}

/// Writes several records under one header.
pub fn write_csv<W: Write>(records: &[RunRecord], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_COLUMNS).map_err(csv_error)?;
    for r in records {
        for p in &r.points {
            w.serialize(CsvRow {
                run_id: r.run_id.clone(),
                seed: r.seed,
                step: p.step,
                metric: p.metric.clone(),
                value: p.value,
            })
            .map_err(csv_error)?;
        }
    }
    w.flush().map_err(|e| invalid("csv", e.to_string()))?;
    Ok(())
}

/// Reads rows back, grouping consecutive rows by `(run_id, seed)`.
pub fn read_csv<R: Read>(input: R) -> Result<Vec<RunRecord>> {
    let mut rd = csv::Reader::from_reader(input);
    let header: Vec<String> = rd.headers().map_err(csv_error)?.iter().map(str::to_string).collect();
    if header != CSV_COLUMNS {
        return Err(invalid("csv", format!("expected columns {CSV_COLUMNS:?}, found {header:?}")));
    }
    let mut out: Vec<RunRecord> = Vec::new();
    for row in rd.deserialize::<CsvRow>() {
        let row = row.map_err(csv_error)?;
        match out.last_mut() {
            Some(r) if r.run_id == row.run_id && r.seed == row.seed => {}
            _ => out.push(RunRecord::new(row.run_id.clone(), row.seed)),
        }
        out.last_mut()
            .expect("just pushed")
            .points
            .push(MetricPoint { step: row.step, metric: row.metric, value: row.value });
    }
    Ok(out)
}

fn csv_error(e: csv::Error) -> crate::Error {
    invalid("csv", e.to_string())
}

/// Mean and sample standard deviation (`n - 1` denominator; 0 for one value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Median; the mean of the middle pair for even counts.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
