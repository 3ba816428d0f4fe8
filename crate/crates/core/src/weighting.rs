//! From prediction-set size to guidance uncertainty, and from uncertainty to
//! a guidance weight in `[0, 1]`.

use serde::{Deserialize, Serialize};

use crate::conformal::check_distribution;
use crate::error::{invalid, Error, Result};

/// Maps a prediction-set cardinality to an uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum UncertaintyMapping {
    /// `(|C| - 1) / (K - 1)`, in `[0, 1]`.
    NormalizedSetSize { universe: usize },
    /// `|C|` itself.
    Identity { universe: usize },
}

impl UncertaintyMapping {
    pub fn universe(&self) -> usize {
        match *self {
            UncertaintyMapping::NormalizedSetSize { universe } | UncertaintyMapping::Identity { universe } => {
                universe
            }
        }
    }
}

/// Uncertainty of a prediction set of `set_size` members.
///
/// An empty set means no candidate conforms, so it maps to the maximum
/// uncertainty (1 normalized, `K` for identity).
pub fn uncertainty(mapping: UncertaintyMapping, set_size: usize) -> Result<f64> {
    let universe = mapping.universe();
    if set_size > universe {
        return Err(Error::SetSizeOutOfRange {
            size: set_size,
            universe,
        });
    }
    match mapping {
        UncertaintyMapping::NormalizedSetSize { universe } => {
            if universe < 2 {
                return Err(Error::DegenerateUniverse);
            }
            if set_size == 0 {
                Ok(1.0)
            } else {
                Ok((set_size - 1) as f64 / (universe - 1) as f64)
            }
        }
        UncertaintyMapping::Identity { universe } => {
            if set_size == 0 {
                Ok(universe as f64)
            } else {
                Ok(set_size as f64)
            }
        }
    }
}

/// A monotone map from uncertainty to a guidance weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum WeightRule {
    /// `exp(-gamma * u)`.
    ExpDecay { gamma: f64 },
    /// 1 for a certain guide (`u == 0`), else 0.
    HardZero,
    /// `exp(-u_guide) / (exp(-u_guide) + exp(-u_other))`.
    RelativeSoftmax,
    /// 1 iff `u_guide < u_other`; ties go to the other side.
    HardArgmax,
}

impl WeightRule {
    pub fn needs_other(&self) -> bool {
        matches!(self, WeightRule::RelativeSoftmax | WeightRule::HardArgmax)
    }
}

/// Guidance weight for uncertainty `u`. Two-policy rules compare against
/// `u_other`.
pub fn weight(rule: WeightRule, u: f64, u_other: Option<f64>) -> Result<f64> {
    if !(u >= 0.0) {
        return Err(invalid("u", format!("uncertainty must be >= 0, got {u}")));
    }
    match rule {
        WeightRule::ExpDecay { gamma } => {
            if !(gamma > 0.0) {
                return Err(invalid("gamma", format!("must be > 0, got {gamma}")));
            }
            Ok((-gamma * u).exp())
        }
        WeightRule::HardZero => Ok(if u == 0.0 { 1.0 } else { 0.0 }),
        WeightRule::RelativeSoftmax => {
            let other = u_other.ok_or(Error::MissingOtherUncertainty)?;
            // exp(-a) / (exp(-a) + exp(-b)) == 1 / (1 + exp(a - b))
            let d = u - other;
            Ok(if d == 0.0 { 0.5 } else { 1.0 / (1.0 + d.exp()) })
        }
        WeightRule::HardArgmax => {
            let other = u_other.ok_or(Error::MissingOtherUncertainty)?;
            Ok(if u < other { 1.0 } else { 0.0 })
        }
    }
}

/// Confidence heuristics used as non-conformal baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HeuristicKind {
    /// Shannon entropy normalized by `ln K`.
    Entropy,
    /// One minus the maximum softmax probability.
    Msp,
}

/// Heuristic uncertainty of a probability vector, in `[0, 1]`.
pub fn heuristic_uncertainty(kind: HeuristicKind, probs: &[f64]) -> Result<f64> {
    check_distribution(probs)?;
    match kind {
        HeuristicKind::Msp => {
            let max = probs.iter().copied().fold(0.0, f64::max);
            Ok((1.0 - max).clamp(0.0, 1.0))
        }
        HeuristicKind::Entropy => {
            if probs.len() < 2 {
                return Ok(0.0);
            }
            let h: f64 = probs
                .iter()
                .filter(|p| **p > 0.0)
                .map(|p| -p * p.ln())
                .sum();
            Ok((h / (probs.len() as f64).ln()).clamp(0.0, 1.0))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalized_set_size() {
        let m = UncertaintyMapping::NormalizedSetSize { universe: 100 };
        assert_eq!(uncertainty(m, 1).unwrap(), 0.0);
        assert_eq!(uncertainty(m, 100).unwrap(), 1.0);
        assert_eq!(uncertainty(m, 0).unwrap(), 1.0);
        assert!(uncertainty(m, 101).is_err());
        let degenerate = UncertaintyMapping::NormalizedSetSize { universe: 1 };
        assert_eq!(uncertainty(degenerate, 1), Err(Error::DegenerateUniverse));
    }

    #[test]
    fn identity_mapping() {
        let m = UncertaintyMapping::Identity { universe: 5 };
        assert_eq!(uncertainty(m, 3).unwrap(), 3.0);
        assert_eq!(uncertainty(m, 0).unwrap(), 5.0);
    }

    #[test]
    fn exp_decay_values() {
        let r = WeightRule::ExpDecay { gamma: 10.0 };
        assert_eq!(weight(r, 0.0, None).unwrap(), 1.0);
        // e^-10 = 4.539992976248485e-5
        assert!((weight(r, 1.0, None).unwrap() - 4.5400e-5).abs() < 1e-8);
        assert!(weight(WeightRule::ExpDecay { gamma: 0.0 }, 1.0, None).is_err());
    }

    #[test]
    fn relative_softmax_values() {
        let r = WeightRule::RelativeSoftmax;
        assert_eq!(weight(r, 2.0, Some(2.0)).unwrap(), 0.5);
        // 1 / (1 + e^-1) = 0.7310585786300049
        assert!((weight(r, 0.0, Some(1.0)).unwrap() - 0.7311).abs() < 1e-4);
        assert_eq!(weight(r, 0.0, None), Err(Error::MissingOtherUncertainty));
    }

    #[test]
    fn hard_rules() {
        assert_eq!(weight(WeightRule::HardZero, 0.0, None).unwrap(), 1.0);
        assert_eq!(weight(WeightRule::HardZero, 0.01, None).unwrap(), 0.0);
        assert_eq!(weight(WeightRule::HardArgmax, 1.0, Some(5.0)).unwrap(), 1.0);
        assert_eq!(weight(WeightRule::HardArgmax, 5.0, Some(5.0)).unwrap(), 0.0);
        assert_eq!(weight(WeightRule::HardArgmax, 1.0, None), Err(Error::MissingOtherUncertainty));
    }

    #[test]
    fn negative_uncertainty_rejected() {
        assert!(weight(WeightRule::HardZero, -0.1, None).is_err());
        assert!(weight(WeightRule::HardZero, f64::NAN, None).is_err());
    }

    #[test]
    fn heuristics() {
        assert_eq!(heuristic_uncertainty(HeuristicKind::Msp, &[1.0, 0.0, 0.0]).unwrap(), 0.0);
        let uniform = [0.25; 4];
        assert!((heuristic_uncertainty(HeuristicKind::Entropy, &uniform).unwrap() - 1.0).abs() < 1e-12);
        // -(0.7 ln 0.7 + 0.2 ln 0.2 + 0.1 ln 0.1) / ln 3, evaluated at 30 digits
        let e = heuristic_uncertainty(HeuristicKind::Entropy, &[0.7, 0.2, 0.1]).unwrap();
        assert!((e - 0.729847).abs() < 1e-6, "{e}");
        assert!(heuristic_uncertainty(HeuristicKind::Msp, &[0.7, 0.2]).is_err());
    }
}
