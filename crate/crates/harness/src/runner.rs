use std::fs;
use std::path::{Path, PathBuf};

use adacong::gridworld::{imitation_prior, run_with_prior};
use adacong::pipelines::{prepare_kd, prepare_ssl, run_kd_with_teacher, run_ssl_on, train_teacher};
use adacong::record::{mean_std, RunRecord};
use rayon::prelude::*;
use serde_json::json;

use crate::config::{Experiment, ExperimentConfig, Method};
use crate::error::{HarnessError, Result};

/// Outcome of one (method, seed) cell.
#[derive(Debug, Clone)]
pub struct Cell {
    pub method: Method,
    pub seed: u64,
    pub result: std::result::Result<RunRecord, String>,
}

/// Per-method aggregate of the summary scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: String,
    pub n: usize,
    /// `(metric, mean, std)` in [`summary_metrics`] order.
    pub stats: Vec<(String, f64, f64)>,
}

pub struct RunReport {
    pub dir: PathBuf,
    pub hash: String,
    pub cells: Vec<Cell>,
    pub summary: Vec<SummaryRow>,
}

impl RunReport {
    pub fn failures(&self) -> impl Iterator<Item = &Cell> {
        self.cells.iter().filter(|c| c.result.is_err())
    }
}

pub fn run_id(hash: &str, method: Method, seed: u64) -> String {
    format!("{}-{}-s{seed}", &hash[..12], method.name())
}

/// Runs every method of one seed, sharing the seed's teacher, data or
/// imitation prior.
fn run_seed(cfg: &ExperimentConfig, methods: &[Method], hash: &str, seed: u64) -> Vec<Cell> {
    let cells = |f: &dyn Fn(Method) -> adacong::Result<RunRecord>| -> Vec<Cell> {
        methods
            .iter()
            .map(|&method| {
                let result = f(method)
                    .map(|mut r| {
                        r.run_id = run_id(hash, method, seed);
                        r
                    })
                    .map_err(|e| e.to_string());
                Cell { method, seed, result }
            })
            .collect()
    };
    let failed = |e: adacong::Error| -> Vec<Cell> {
        methods.iter().map(|&method| Cell { method, seed, result: Err(format!("setup: {e}")) }).collect()
    };
    match &cfg.experiment {
        Experiment::Kd(kd) => {
            let setup = prepare_kd(kd, seed).and_then(|d| train_teacher(kd, &d, seed).map(|t| (d, t)));
            match setup {
                Ok((data, teacher)) => cells(&|m| {
                    let Method::Kd(m) = m else { unreachable!() };
                    run_kd_with_teacher(kd, m, seed, &data, &teacher).map(|r| r.record)
                }),
                Err(e) => failed(e),
            }
        }
        Experiment::Ssl(ssl) => match prepare_ssl(ssl, seed) {
            Ok(data) => cells(&|m| {
                let Method::Ssl(m) = m else { unreachable!() };
                run_ssl_on(ssl, m, seed, &data).map(|r| r.record)
            }),
            Err(e) => failed(e),
        },
        Experiment::Gridworld(g) => match imitation_prior(g, seed) {
            Ok(prior) => cells(&|m| {
                let Method::Grid(m) = m else { unreachable!() };
                run_with_prior(g, m, seed, &prior, false).map(|r| r.to_record(""))
            }),
            Err(e) => failed(e),
        },
    }
}

/// Runs all cells on a pool of `jobs` workers. Cells come back ordered by
/// method, then seed.
pub fn run_cells(cfg: &ExperimentConfig, hash: &str, jobs: usize) -> Result<Vec<Cell>> {
    let methods = cfg.methods()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| HarnessError::Run(e.to_string()))?;
    let per_seed: Vec<Vec<Cell>> = pool.install(|| cfg.seeds.par_iter().map(|&s| run_seed(cfg, &methods, hash, s)).collect());
    let mut cells: Vec<Cell> = per_seed.into_iter().flatten().collect();
    let order = |m: Method| methods.iter().position(|&x| x == m).unwrap_or(usize::MAX);
    cells.sort_by_key(|c| (order(c.method), cfg.seeds.iter().position(|&s| s == c.seed)));
    Ok(cells)
}

/// Scalars reported per run in the summary table.
pub fn summary_metrics(exp: &Experiment) -> &'static [&'static str] {
    match exp {
        Experiment::Kd(_) => &["test/accuracy", "test/accuracy_clean", "test/accuracy_shifted", "guide/mean_weight", "teacher/test_accuracy"],
        Experiment::Ssl(_) => &["test/accuracy", "pseudo/mask_rate", "guide/mean_weight"],
        Experiment::Gridworld(_) => &["final100/reward", "final100/success", "final100/u_rl"],
    }
}

/// One summary scalar of a run; `final100/x` is the mean of `episode/x`
/// over the last 100 steps, anything else the last value.
pub fn scalar(record: &RunRecord, metric: &str) -> Option<f64> {
    match metric.strip_prefix("final100/") {
        Some(m) => record.tail_mean(&format!("episode/{m}"), 100),
        None => record.last(metric),
    }
}

pub fn summarize(exp: &Experiment, methods: &[Method], cells: &[Cell]) -> Vec<SummaryRow> {
    methods
        .iter()
        .map(|&m| {
            let records: Vec<&RunRecord> = cells.iter().filter(|c| c.method == m).filter_map(|c| c.result.as_ref().ok()).collect();
            let stats = summary_metrics(exp)
                .iter()
                .map(|&metric| {
                    let values: Vec<f64> = records.iter().filter_map(|r| scalar(r, metric)).collect();
                    let (mean, std) = mean_std(&values);
                    (metric.to_string(), mean, std)
                })
                .collect();
            SummaryRow { method: m.name().to_string(), n: records.len(), stats }
        })
        .collect()
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| HarnessError::io(path, e))
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| HarnessError::io(path, e.into()))?;
    let mut header = vec!["method".to_string(), "n".to_string()];
    if let Some(first) = rows.first() {
        for (m, _, _) in &first.stats {
            header.push(format!("{m}_mean"));
            header.push(format!("{m}_std"));
        }
    }
    let io = |e: csv::Error| HarnessError::io(path, e.into());
    w.write_record(&header).map_err(io)?;
    for r in rows {
        let mut rec = vec![r.method.clone(), r.n.to_string()];
        for (_, mean, std) in &r.stats {
            rec.push(mean.to_string());
            rec.push(std.to_string());
        }
        w.write_record(&rec).map_err(io)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

/// Runs the config into `dir`: `config.json`, `runs/<method>-s<seed>.csv`,
/// `summary.csv` and, when any cell failed, `failures.txt`.
pub fn run(cfg: &ExperimentConfig, dir: &Path, jobs: usize) -> Result<RunReport> {
    let hash = cfg.hash();
    let runs = dir.join("runs");
    create_dir(&runs)?;
    let snapshot = json!({ "hash": hash, "config": cfg });
    write_file(&dir.join("config.json"), serde_json::to_string_pretty(&snapshot).expect("json").as_bytes())?;

    let cells = run_cells(cfg, &hash, jobs)?;
    let mut failures = String::new();
    for c in &cells {
        match &c.result {
            Ok(r) => write_file(&runs.join(format!("{}-s{}.csv", c.method.name(), c.seed)), r.to_csv_string().as_bytes())?,
            Err(e) => failures.push_str(&format!("{} seed {}: {e}\n", c.method.name(), c.seed)),
        }
    }
    if !failures.is_empty() {
        write_file(&dir.join("failures.txt"), failures.as_bytes())?;
    }
    let summary = summarize(&cfg.experiment, &cfg.methods()?, &cells);
    write_summary(&dir.join("summary.csv"), &summary)?;
    Ok(RunReport { dir: dir.to_path_buf(), hash, cells, summary })
}

/// Plain-text table of `mean ± std` per method.
pub fn format_summary(rows: &[SummaryRow]) -> String {
    let mut out = String::new();
    let Some(first) = rows.first() else { return out };
    out.push_str(&format!("{:<14} {:>3}", "method", "n"));
    for (m, _, _) in &first.stats {
        out.push_str(&format!("  {m:>24}"));
    }
    out.push('\n');
    for r in rows {
        out.push_str(&format!("{:<14} {:>3}", r.method, r.n));
        for (_, mean, std) in &r.stats {
            out.push_str(&format!("  {:>24}", format!("{mean:.4} ± {std:.4}")));
        }
        out.push('\n');
    }
    out
}
