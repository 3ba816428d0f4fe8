//! Experiment runner behind the `adacong` binary.
//!
//! A run config is one JSON document:
//!
//! ```json
//! {
//!   "version": 1,
//!   "experiment": { "kd": { "gamma": 10.0 } },
//!   "methods": ["scratch", "plain_kd", "adacong"],
//!   "seeds": [0, 1, 2, 3, 4]
//! }
//! ```
//!
//! Omitted hyperparameters take the library defaults and unknown keys are
//! rejected. `methods` may be left out to run every method.

pub mod config;
pub mod error;
pub mod render;
pub mod runner;
pub mod sweep;

pub use config::{parse_seeds, parse_values, Experiment, ExperimentConfig, Method, SCHEMA_VERSION};
pub use error::{HarnessError, Result};
pub use runner::{run, RunReport, SummaryRow};
