use std::collections::HashSet;
use std::path::{Path, PathBuf};

use adacong::gridworld::{GridworldConfig, Mode};
use adacong::pipelines::{KdConfig, KdMethod, SslConfig, SslMethod};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{HarnessError, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Experiment family with its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Kd(KdConfig),
    Ssl(SslConfig),
    Gridworld(GridworldConfig),
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Kd(_) => "kd",
            Experiment::Ssl(_) => "ssl",
            Experiment::Gridworld(_) => "gridworld",
        }
    }

    /// Every method the experiment knows, in report order.
    pub fn all_methods(&self) -> Vec<Method> {
        match self {
            Experiment::Kd(_) => KdMethod::ALL.into_iter().map(Method::Kd).collect(),
            Experiment::Ssl(_) => [SslMethod::Unweighted, SslMethod::AdaConG].into_iter().map(Method::Ssl).collect(),
            Experiment::Gridworld(_) => Mode::ALL.into_iter().map(Method::Grid).collect(),
        }
    }

    pub fn parse_method(&self, name: &str) -> std::result::Result<Method, String> {
        match self {
            Experiment::Kd(_) => name.parse().map(Method::Kd),
            Experiment::Ssl(_) => name.parse().map(Method::Ssl),
            Experiment::Gridworld(_) => name.parse().map(Method::Grid),
        }
    }

    fn validate(&self) -> adacong::Result<()> {
        match self {
            Experiment::Kd(c) => c.validate(),
            Experiment::Ssl(c) => c.validate(),
            Experiment::Gridworld(c) => c.validate(),
        }
    }

    /// Metric the sweep table and the default chart report.
    pub fn primary_metric(&self) -> &'static str {
        match self {
            Experiment::Gridworld(_) => "final100/reward",
            _ => "test/accuracy",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Kd(KdMethod),
    Ssl(SslMethod),
    Grid(Mode),
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Kd(m) => m.name(),
            Method::Ssl(m) => m.name(),
            Method::Grid(m) => m.name(),
        }
    }
}

/// One JSON document describing a batch of runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub experiment: Experiment,
    /// Method names; empty runs every method.
    #[serde(default)]
    pub methods: Vec<String>,
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Parses and validates; `origin` prefixes line-level diagnostics.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)
            .map_err(|e| HarnessError::config(format!("{origin}:{}:{}", e.line(), e.column()), strip_position(&e)))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != SCHEMA_VERSION {
            return Err(HarnessError::config("version", format!("unsupported schema version {}, expected {SCHEMA_VERSION}", self.version)));
        }
        if self.seeds.is_empty() {
            return Err(HarnessError::config("seeds", "at least one seed is required"));
        }
        let mut seen = HashSet::new();
        if let Some(s) = self.seeds.iter().find(|s| !seen.insert(**s)) {
            return Err(HarnessError::config("seeds", format!("seed {s} is listed twice")));
        }
        self.methods()?;
        self.experiment
            .validate()
            .map_err(|e| HarnessError::config(format!("experiment.{}", self.experiment.name()), e))
    }

    pub fn methods(&self) -> Result<Vec<Method>> {
        if self.methods.is_empty() {
            return Ok(self.experiment.all_methods());
        }
        let mut out = Vec::new();
        for (i, name) in self.methods.iter().enumerate() {
            let m = self.experiment.parse_method(name).map_err(|e| HarnessError::config(format!("methods[{i}]"), e))?;
            if out.contains(&m) {
                return Err(HarnessError::config(format!("methods[{i}]"), format!("`{name}` is listed twice")));
            }
            out.push(m);
        }
        Ok(out)
    }

    /// SHA-256 of the canonical JSON form, output directory excluded.
    pub fn hash(&self) -> String {
        let canonical = Self { output: None, ..self.clone() };
        let bytes = serde_json::to_vec(&canonical).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Copy with one experiment hyperparameter replaced. `param` is a dotted
    /// path into the experiment's parameters and must already exist.
    pub fn with_param(&self, param: &str, value: &Value) -> Result<Self> {
        let name = self.experiment.name();
        let mut doc = serde_json::to_value(&self.experiment).expect("config serializes");
        let mut slot = doc.get_mut(name).expect("externally tagged");
        for key in param.split('.') {
            slot = slot
                .get_mut(key)
                .ok_or_else(|| HarnessError::config(format!("--param {param}"), format!("no parameter `{key}` in {name} config")))?;
        }
        *slot = value.clone();
        let experiment: Experiment =
            serde_json::from_value(doc).map_err(|e| HarnessError::config(format!("--param {param}"), format!("value {value}: {e}")))?;
        let cfg = Self { experiment, ..self.clone() };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn strip_position(e: &serde_json::Error) -> String {
    let s = e.to_string();
    match s.rfind(" at line ") {
        Some(i) => s[..i].to_string(),
        None => s,
    }
}

/// Parses `--seeds`: a comma list (`1,2,5`) or a half-open range (`0..5`).
pub fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let bad = |m: String| HarnessError::config("--seeds", m);
    if let Some((a, b)) = text.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad(format!("bad range start `{a}`")))?;
        let b: u64 = b.trim().parse().map_err(|_| bad(format!("bad range end `{b}`")))?;
        if b <= a {
            return Err(bad(format!("empty range {a}..{b}")));
        }
        return Ok((a..b).collect());
    }
    text.split(',')
        .map(|s| s.trim().parse().map_err(|_| bad(format!("bad seed `{s}`"))))
        .collect()
}

/// Parses `--values`: comma-separated JSON scalars; bare words become strings.
pub fn parse_values(text: &str) -> Result<Vec<Value>> {
    let values: Vec<Value> = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| serde_json::from_str(s).unwrap_or_else(|_| Value::String(s.to_string())))
        .collect();
    if values.is_empty() {
        return Err(HarnessError::config("--values", "empty value list"));
    }
    Ok(values)
}
