use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("calibration set is empty")]
    EmptyCalibration,
    #[error("alpha must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
    #[error("non-finite score {value} at position {index}")]
    NonFiniteScore { index: usize, value: f64 },
    #[error("target index {index} out of range for {len} outputs")]
    TargetOutOfRange { index: usize, len: usize },
    #[error("probability vector is malformed: {0}")]
    MalformedDistribution(String),
    #[error("rule and model output do not match: {0}")]
    RuleMismatch(&'static str),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("set size {size} exceeds universe of {universe}")]
    SetSizeOutOfRange { size: usize, universe: usize },
    #[error("normalized set-size mapping needs at least two labels")]
    DegenerateUniverse,
    #[error("weight rule needs the other policy's uncertainty")]
    MissingOtherUncertainty,
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("non-finite loss in batch of {batch_len} (sample {sample}, task {task_loss}, guide {guide_loss})")]
    NonFiniteLoss {
        batch_len: usize,
        sample: usize,
        task_loss: f64,
        guide_loss: f64,
    },
    #[error("calibration and training sets overlap at index {0}")]
    CalibrationOverlap(usize),
    #[error("labeled set is empty")]
    EmptyLabeledSet,
    #[error("environment has no path from start to goal")]
    Unsolvable,
    #[error("layout parse error on line {line}: {reason}")]
    Layout { line: usize, reason: String },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
