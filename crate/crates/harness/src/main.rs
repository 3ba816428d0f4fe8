use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adacong_harness::config::{parse_seeds, parse_values, Experiment, ExperimentConfig};
use adacong_harness::render::{curves, load_runs, render_svg};
use adacong_harness::runner::{format_summary, run};
use adacong_harness::sweep::{format_sweep, sweep};
use adacong_harness::{HarnessError, Result};
use clap::{Parser, Subcommand};

/// Output root used when neither `--out` nor the config names a directory.
const OUT_ENV: &str = "ADACONG_OUT";

#[derive(Parser)]
#[command(name = "adacong", version, about = "Run, sweep and plot conformal-guidance experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Seeds replacing the config's list: `0..5` or `1,4,9`.
    #[arg(long, global = true)]
    seeds: Option<String>,
    /// Output directory. Defaults to `$ADACONG_OUT/<experiment>-<hash>`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to the available cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (method, seed) cell of a config.
    Run { config: PathBuf },
    /// One full run per value of a hyperparameter.
    Sweep {
        config: PathBuf,
        /// Dotted path into the experiment parameters, e.g. `gamma` or `task.separation`.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long)]
        values: String,
    },
    /// Draw mean ± std learning curves of a run directory as SVG.
    Render {
        dir: PathBuf,
        /// Metric to plot; defaults to test accuracy or episode reward.
        #[arg(long)]
        metric: Option<String>,
        /// Trailing-mean window applied to each run first.
        #[arg(long, default_value_t = 1)]
        smooth: usize,
        /// SVG path; defaults to `<dir>/<metric>.svg`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn load(cli: &Cli, path: &Path) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = &cli.seeds {
        cfg.seeds = parse_seeds(s)?;
        cfg.validate()?;
    }
    Ok(cfg)
}

fn out_dir(cli: &Cli, cfg: &ExperimentConfig) -> PathBuf {
    if let Some(d) = cli.out.clone().or_else(|| cfg.output.clone()) {
        return d;
    }
    let root = std::env::var_os(OUT_ENV).map_or_else(|| PathBuf::from("adacong-runs"), PathBuf::from);
    root.join(format!("{}-{}", cfg.experiment.name(), &cfg.hash()[..12]))
}

fn jobs(cli: &Cli) -> usize {
    cli.jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn execute(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::Run { config } => {
            let cfg = load(cli, config)?;
            let dir = out_dir(cli, &cfg);
            let report = run(&cfg, &dir, jobs(cli))?;
            print!("{}", format_summary(&report.summary));
            println!("wrote {} (config {})", dir.display(), &report.hash[..12]);
            let failed = report.failures().count();
            if failed > 0 {
                eprintln!("{failed} of {} runs failed; see {}", report.cells.len(), dir.join("failures.txt").display());
            }
            Ok(failed == 0)
        }
        Command::Sweep { config, param, values } => {
            let cfg = load(cli, config)?;
            let values = parse_values(values)?;
            let dir = out_dir(cli, &cfg).join(format!("sweep-{param}"));
            let points = sweep(&cfg, param, &values, &dir, jobs(cli))?;
            print!("{}", format_sweep(param, cfg.experiment.primary_metric(), &points));
            println!("wrote {}", dir.join("sweep.csv").display());
            let failed: usize = points.iter().map(|p| p.report.failures().count()).sum();
            if failed > 0 {
                eprintln!("{failed} runs failed; see failures.txt under {}", dir.display());
            }
            Ok(failed == 0)
        }
        Command::Render { dir, metric, smooth, output } => {
            let saved = read_snapshot(dir);
            let metric = metric.clone().unwrap_or_else(|| match saved.as_ref().map(|c| &c.experiment) {
                Some(Experiment::Gridworld(_)) => "episode/reward".into(),
                _ => "test/accuracy".into(),
            });
            let order: Vec<String> = saved
                .and_then(|c| c.methods().ok())
                .map(|ms| ms.iter().map(|m| m.name().to_string()).collect())
                .unwrap_or_default();
            let records = load_runs(dir)?;
            let svg = render_svg(&curves(&records, &metric, *smooth, &order)?, &metric)?;
            let path = output.clone().unwrap_or_else(|| dir.join(format!("{}.svg", metric.replace('/', "_"))));
            std::fs::write(&path, svg).map_err(|e| HarnessError::io(&path, e))?;
            println!("wrote {}", path.display());
            Ok(true)
        }
    }
}

/// The config stored inside a run directory's `config.json` snapshot.
fn read_snapshot(dir: &Path) -> Option<ExperimentConfig> {
    let text = std::fs::read_to_string(dir.join("config.json")).ok()?;
    let v: serde_json::Value = serde_json::from_str(&text).ok()?;
    serde_json::from_value(v.get("config")?.clone()).ok()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
