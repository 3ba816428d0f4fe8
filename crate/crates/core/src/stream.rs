//! Streaming calibration for a policy that keeps changing.
//!
//! A [`SlidingCalibrator`] keeps the newest `N` nonconformity scores, and after
//! each batch of `m` new scores moves its running quantile toward the window's
//! conformal quantile with an exponential moving average. It starts from a
//! reference calibration set and quantile (warm start).

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::conformal::{quantile_of_sorted, CalibrationSet};
use crate::error::{invalid, Error, Result};

/// Default EMA smoothing factor.
pub const DEFAULT_SMOOTHING: f64 = 0.1;

/// Window and smoothing parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StreamConfig {
    /// Window capacity `N`.
    pub window: usize,
    /// Scores per update `m`.
    pub batch: usize,
    pub alpha: f64,
    /// EMA factor in `(0, 1]`; 1 tracks the raw window quantile.
    pub smoothing: f64,
}

impl Default for StreamConfig {
    fn default() -> Self {
        Self {
            window: 1000,
            batch: 128,
            alpha: 0.1,
            smoothing: DEFAULT_SMOOTHING,
        }
    }
}

impl StreamConfig {
    fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(invalid("window", "must be positive"));
        }
        if self.batch == 0 {
            return Err(invalid("batch", "must be positive"));
        }
        if self.window < self.batch {
            return Err(invalid(
                "batch",
                format!("batch {} exceeds window {}", self.batch, self.window),
            ));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidAlpha(self.alpha));
        }
        if !(self.smoothing > 0.0 && self.smoothing <= 1.0) {
            return Err(invalid("smoothing", format!("must lie in (0, 1], got {}", self.smoothing)));
        }
        Ok(())
    }
}

/// Sliding-window calibrator with an EMA-smoothed quantile. Single writer.
#[derive(Debug, Clone, PartialEq)]
pub struct SlidingCalibrator {
    config: StreamConfig,
    window: VecDeque<f64>,
    current: f64,
    last_raw: Option<f64>,
    updates: usize,
}

impl SlidingCalibrator {
    /// Seeds the window with `reference` (newest `N` kept) and the running
    /// quantile with `reference_quantile`.
    ///
    /// `reference` order is taken as insertion order; a [`CalibrationSet`] is
    /// sorted, so the "newest" scores after truncation are its largest ones.
    /// Use [`SlidingCalibrator::warm_start_ordered`] when arrival order matters.
    pub fn warm_start(reference: &CalibrationSet, reference_quantile: f64, config: StreamConfig) -> Result<Self> {
        Self::warm_start_ordered(reference.sorted(), reference_quantile, config)
    }

    /// Like [`SlidingCalibrator::warm_start`] for scores in arrival order.
    pub fn warm_start_ordered(reference: &[f64], reference_quantile: f64, config: StreamConfig) -> Result<Self> {
        config.validate()?;
        if !reference_quantile.is_finite() {
            return Err(invalid(
                "reference_quantile",
                format!("must be finite, got {reference_quantile}"),
            ));
        }
        if let Some((index, &value)) = reference.iter().enumerate().find(|(_, s)| !s.is_finite()) {
            return Err(Error::NonFiniteScore { index, value });
        }
        let skip = reference.len().saturating_sub(config.window);
        let mut window = VecDeque::with_capacity(config.window);
        window.extend(reference[skip..].iter().copied());
        Ok(Self {
            config,
            window,
            current: reference_quantile,
            last_raw: None,
            updates: 0,
        })
    }

    pub fn config(&self) -> &StreamConfig {
        &self.config
    }

    /// The smoothed quantile.
    pub fn quantile(&self) -> f64 {
        self.current
    }

    /// The window's own quantile from the last update, if any.
    pub fn last_raw_quantile(&self) -> Option<f64> {
        self.last_raw
    }

    pub fn updates(&self) -> usize {
        self.updates
    }

    /// Window contents, oldest first.
    pub fn window(&self) -> impl ExactSizeIterator<Item = &f64> + '_ {
        self.window.iter()
    }

    pub fn window_len(&self) -> usize {
        self.window.len()
    }

    /// Appends one batch of exactly `m` scores and moves the running quantile.
    pub fn update(&mut self, new_scores: &[f64]) -> Result<f64> {
        if new_scores.len() != self.config.batch {
            return Err(Error::DimensionMismatch {
                expected: self.config.batch,
                got: new_scores.len(),
            });
        }
        self.push_scores(new_scores)
    }

    /// Appends any number of scores (at most `N`) and moves the running
    /// quantile once.
    pub fn push_scores(&mut self, new_scores: &[f64]) -> Result<f64> {
        if let Some((index, &value)) = new_scores.iter().enumerate().find(|(_, s)| !s.is_finite()) {
            return Err(Error::NonFiniteScore { index, value });
        }
        if new_scores.is_empty() {
            return Ok(self.current);
        }
        for &s in new_scores {
            if self.window.len() == self.config.window {
                self.window.pop_front();
            }
            self.window.push_back(s);
        }
        let raw = self.window_quantile()?;
        let g = self.config.smoothing;
        let blended = (1.0 - g) * self.current + g * raw;
        // rounding must not step outside the segment [old, raw]
        self.current = blended.clamp(self.current.min(raw), self.current.max(raw));
        self.last_raw = Some(raw);
        self.updates += 1;
        Ok(self.current)
    }

    /// Conformal quantile of the current window. While the window is too
    /// short for the finite-sample rank, the window maximum is used so the
    /// running quantile stays finite.
    pub fn window_quantile(&self) -> Result<f64> {
        let mut sorted: Vec<f64> = self.window.iter().copied().collect();
        sorted.sort_by(f64::total_cmp);
        let q = quantile_of_sorted(&sorted, self.config.alpha)?;
        if q.is_infinite() {
            Ok(*sorted.last().expect("window is nonempty"))
        } else {
            Ok(q.value)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(window: usize, batch: usize, smoothing: f64) -> StreamConfig {
        StreamConfig {
            window,
            batch,
            alpha: 0.1,
            smoothing,
        }
    }

    #[test]
    fn warm_start_keeps_reference_quantile() {
        let set = CalibrationSet::new((0..10).map(|i| i as f64)).unwrap();
        let c = SlidingCalibrator::warm_start(&set, 1.2, cfg(1000, 128, 0.1)).unwrap();
        assert_eq!(c.quantile(), 1.2);
        assert_eq!(c.window_len(), 10);
    }

    #[test]
    fn warm_start_truncates_to_newest() {
        let scores: Vec<f64> = (0..1500).map(|i| i as f64).collect();
        let c = SlidingCalibrator::warm_start_ordered(&scores, 0.0, cfg(1000, 128, 0.1)).unwrap();
        assert_eq!(c.window_len(), 1000);
        assert_eq!(*c.window().next().unwrap(), 500.0);
    }

    #[test]
    fn batch_larger_than_window_rejected() {
        let err = SlidingCalibrator::warm_start_ordered(&[], 0.0, cfg(100, 128, 0.1)).unwrap_err();
        assert!(matches!(err, Error::InvalidParameter { name: "batch", .. }));
    }

    #[test]
    fn ema_arithmetic() {
        // window of identical scores 2.0 -> raw quantile 2.0
        let mut c = SlidingCalibrator::warm_start_ordered(&[], 1.0, cfg(10, 10, 0.1)).unwrap();
        let q = c.update(&[2.0; 10]).unwrap();
        assert!((q - 1.1).abs() < 1e-12);
        assert_eq!(c.last_raw_quantile(), Some(2.0));
    }

    #[test]
    fn unit_smoothing_tracks_raw() {
        let mut c = SlidingCalibrator::warm_start_ordered(&[], 5.0, cfg(20, 10, 1.0)).unwrap();
        let batch: Vec<f64> = (1..=10).map(f64::from).collect();
        let q = c.update(&batch).unwrap();
        assert_eq!(q, c.window_quantile().unwrap());
    }

    #[test]
    fn update_errors() {
        let mut c = SlidingCalibrator::warm_start_ordered(&[], 1.0, cfg(10, 2, 0.1)).unwrap();
        assert!(matches!(c.update(&[1.0]), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(c.update(&[1.0, f64::NAN]), Err(Error::NonFiniteScore { index: 1, .. })));
        assert_eq!(c.window_len(), 0);
        assert!(SlidingCalibrator::warm_start_ordered(&[], f64::INFINITY, cfg(10, 2, 0.1)).is_err());
        assert!(SlidingCalibrator::warm_start_ordered(&[], 0.0, cfg(10, 2, 0.0)).is_err());
    }

    #[test]
    fn short_window_stays_finite() {
        let mut c = SlidingCalibrator::warm_start_ordered(&[], 0.0, cfg(1000, 2, 1.0)).unwrap();
        let q = c.update(&[0.3, 0.7]).unwrap();
        assert_eq!(q, 0.7);
    }
}
