//! Adaptive conformal guidance.
//!
//! Split conformal prediction turns a guide's raw outputs (teacher logits,
//! pseudo-labels, an imitation policy) into prediction sets. The set size is
//! the guide's uncertainty, and a decreasing weight of that uncertainty scales
//! how much the learner listens to the guide.
//!
//! - [`conformal`]: scores, quantiles, prediction sets, coverage.
//! - [`weighting`]: set size to uncertainty to weight.
//! - [`stream`]: sliding-window calibration with an EMA quantile.
//! - [`tinylearn`]: dense nets, losses, manual backprop.
//! - [`pipelines`]: toy distillation and semi-supervised loops.
//! - [`gridworld`]: imitation-guided RL on small grids.

pub mod conformal;
pub mod error;
pub mod gridworld;
pub mod pipelines;
pub mod record;
pub mod rng;
pub mod stream;
pub mod tinylearn;
pub mod weighting;

pub use error::{Error, Result};
