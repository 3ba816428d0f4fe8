//! Split conformal prediction primitives.
//!
//! A [`CalibrationSet`] holds held-out nonconformity scores. From it,
//! [`compute_quantile`] returns the finite-sample corrected `1 - alpha`
//! quantile: the `k`-th smallest score with `k = ceil((n + 1)(1 - alpha))`,
//! or `+inf` when `k > n`. Thresholding per-label scores against that value
//! yields a [`PredictionSet`], which covers the true label with probability at
//! least `1 - alpha` under exchangeability.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probability floor applied before taking `-log p`.
pub const NEG_LOG_PROB_FLOOR: f64 = 1e-12;

/// Tolerance for a probability vector's total mass.
pub const DISTRIBUTION_TOLERANCE: f64 = 1e-6;

/// How unusual a (prediction, target) pair is. Lower is more typical.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NonconformityRule {
    /// `|y - y_hat|` for point regressors.
    Residual,
    /// `1 - p_y` for classifiers.
    Confidence,
    /// `-log pi(a|s)` for categorical policies.
    NegLogProb,
}

/// What a model produced for one input.
#[derive(Debug, Clone, Copy)]
pub enum ModelOutput<'a> {
    Point(f64),
    Probs(&'a [f64]),
}

/// Ground truth paired with a [`ModelOutput`].
#[derive(Debug, Clone, Copy)]
pub enum Target {
    Value(f64),
    Label(usize),
}

/// Checks that `probs` is a distribution within [`DISTRIBUTION_TOLERANCE`].
pub fn check_distribution(probs: &[f64]) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::MalformedDistribution("empty vector".into()));
    }
    if let Some((i, p)) = probs
        .iter()
        .enumerate()
        .find(|(_, p)| !p.is_finite() || **p < 0.0)
    {
        return Err(Error::MalformedDistribution(format!(
            "entry {i} is {p}"
        )));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > DISTRIBUTION_TOLERANCE {
        return Err(Error::MalformedDistribution(format!(
            "mass sums to {total}"
        )));
    }
    Ok(())
}

/// Nonconformity of `target` under `output` according to `rule`.
pub fn score(rule: NonconformityRule, output: ModelOutput<'_>, target: Target) -> Result<f64> {
    match (rule, output, target) {
        (NonconformityRule::Residual, ModelOutput::Point(pred), Target::Value(y)) => {
            let s = (y - pred).abs();
            if s.is_finite() {
                Ok(s)
            } else {
                Err(Error::NonFiniteScore { index: 0, value: s })
            }
        }
        (NonconformityRule::Confidence, ModelOutput::Probs(p), Target::Label(y)) => {
            check_distribution(p)?;
            let py = *p.get(y).ok_or(Error::TargetOutOfRange {
                index: y,
                len: p.len(),
            })?;
            Ok((1.0 - py).clamp(0.0, 1.0))
        }
        (NonconformityRule::NegLogProb, ModelOutput::Probs(p), Target::Label(a)) => {
            check_distribution(p)?;
            let pa = *p.get(a).ok_or(Error::TargetOutOfRange {
                index: a,
                len: p.len(),
            })?;
            Ok(neg_log_prob(pa))
        }
        (NonconformityRule::Residual, _, _) => {
            Err(Error::RuleMismatch("residual scores need a point prediction and a value"))
        }
        _ => Err(Error::RuleMismatch(
            "classification scores need a probability vector and a label",
        )),
    }
}

#[inline]
pub(crate) fn neg_log_prob(p: f64) -> f64 {
    // max(0) folds -0.0 into 0.0
    (-p.max(NEG_LOG_PROB_FLOOR).ln()).max(0.0)
}

/// Scores of every candidate label for one input, indexed by label.
pub fn label_scores(rule: NonconformityRule, probs: &[f64]) -> Result<Vec<f64>> {
    check_distribution(probs)?;
    match rule {
        NonconformityRule::Confidence => Ok(probs.iter().map(|p| (1.0 - p).clamp(0.0, 1.0)).collect()),
        NonconformityRule::NegLogProb => Ok(probs.iter().map(|&p| neg_log_prob(p)).collect()),
        NonconformityRule::Residual => Err(Error::RuleMismatch(
            "residual scores have no per-label form",
        )),
    }
}

/// Held-out nonconformity scores, kept sorted ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSet {
    sorted: Vec<f64>,
    capacity: Option<usize>,
}

impl CalibrationSet {
    /// Builds a set from raw scores. Every score must be finite.
    pub fn new(scores: impl IntoIterator<Item = f64>) -> Result<Self> {
        let mut sorted: Vec<f64> = scores.into_iter().collect();
        if let Some((index, &value)) = sorted.iter().enumerate().find(|(_, s)| !s.is_finite()) {
            return Err(Error::NonFiniteScore { index, value });
        }
        // stable sort keeps equal scores in insertion order
        sorted.sort_by(f64::total_cmp);
        Ok(Self {
            sorted,
            capacity: None,
        })
    }

    /// Same as [`CalibrationSet::new`] but records a capacity hint for
    /// streaming consumers.
    pub fn with_capacity(scores: impl IntoIterator<Item = f64>, capacity: usize) -> Result<Self> {
        let mut set = Self::new(scores)?;
        set.capacity = Some(capacity);
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn capacity(&self) -> Option<usize> {
        self.capacity
    }

    /// Scores in ascending order.
    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    /// Inserts one score, keeping the order.
    pub fn insert(&mut self, score: f64) -> Result<()> {
        if !score.is_finite() {
            return Err(Error::NonFiniteScore {
                index: self.sorted.len(),
                value: score,
            });
        }
        let at = self.sorted.partition_point(|s| *s <= score);
        self.sorted.insert(at, score);
        Ok(())
    }
}

/// A calibrated threshold on nonconformity scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConformalQuantile {
    /// The threshold; `+inf` when the calibration set is too small for `alpha`.
    #[serde(with = "inf_as_null")]
    pub value: f64,
    pub alpha: f64,
    pub n: usize,
}

impl ConformalQuantile {
    /// A fixed threshold that did not come from a calibration set.
    pub fn fixed(value: f64, alpha: f64) -> Self {
        Self { value, alpha, n: 0 }
    }

    pub fn is_infinite(&self) -> bool {
        self.value == f64::INFINITY
    }
}

/// JSON has no infinity; store it as `null`.
mod inf_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// One-based rank `ceil((n + 1)(1 - alpha))` of the conformal order statistic.
///
/// The product is nudged down by a few ulps so that exact integers such as
/// `10 * 0.9` are not pushed to the next rank by representation error.
pub fn quantile_rank(n: usize, alpha: f64) -> usize {
    let target = (n as f64 + 1.0) * (1.0 - alpha);
    (target - 1e-9 * target.max(1.0)).ceil().max(1.0) as usize
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidAlpha(alpha))
    }
}

/// Finite-sample corrected `1 - alpha` quantile of `scores`.
pub fn compute_quantile(scores: &CalibrationSet, alpha: f64) -> Result<ConformalQuantile> {
    check_alpha(alpha)?;
    quantile_of_sorted(scores.sorted(), alpha)
}

/// Quantile of an already ascending slice. Used by the streaming calibrator,
/// which keeps its own window.
pub(crate) fn quantile_of_sorted(sorted: &[f64], alpha: f64) -> Result<ConformalQuantile> {
    check_alpha(alpha)?;
    let n = sorted.len();
    if n == 0 {
        return Err(Error::EmptyCalibration);
    }
    let k = quantile_rank(n, alpha);
    let value = if k > n { f64::INFINITY } else { sorted[k - 1] };
    Ok(ConformalQuantile { value, alpha, n })
}

/// Candidate labels (or actions) whose score is at or below a threshold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionSet {
    members: Vec<usize>,
    universe_size: usize,
}

impl PredictionSet {
    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn universe_size(&self) -> usize {
        self.universe_size
    }

    pub fn contains(&self, label: usize) -> bool {
        self.members.binary_search(&label).is_ok()
    }
}

/// Labels whose score is `<= quantile.value`. An infinite quantile admits
/// every label.
pub fn prediction_set(per_label_scores: &[f64], quantile: &ConformalQuantile) -> Result<PredictionSet> {
    if per_label_scores.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: 0,
        });
    }
    let members = per_label_scores
        .iter()
        .enumerate()
        .filter(|(_, s)| quantile.is_infinite() || **s <= quantile.value)
        .map(|(i, _)| i)
        .collect();
    Ok(PredictionSet {
        members,
        universe_size: per_label_scores.len(),
    })
}

/// Size of the prediction set without materializing it.
pub fn prediction_set_size(per_label_scores: &[f64], threshold: f64) -> usize {
    per_label_scores.iter().filter(|s| **s <= threshold).count()
}

/// Fraction of `test_scores` at or below the threshold.
pub fn empirical_coverage(quantile: &ConformalQuantile, test_scores: &[f64]) -> Result<f64> {
    if test_scores.is_empty() {
        return Err(Error::EmptyCalibration);
    }
    let covered = test_scores
        .iter()
        .filter(|s| quantile.is_infinite() || **s <= quantile.value)
        .count();
    Ok(covered as f64 / test_scores.len() as f64)
}

/// A frozen quantile together with the scoring rule that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConformalCalibrator {
    pub rule: NonconformityRule,
    pub quantile: ConformalQuantile,
}

impl ConformalCalibrator {
    /// Calibrates `rule` on labeled probability outputs.
    pub fn fit<'a>(
        rule: NonconformityRule,
        outputs: impl IntoIterator<Item = (&'a [f64], usize)>,
        alpha: f64,
    ) -> Result<Self> {
        let scores = outputs
            .into_iter()
            .map(|(p, y)| score(rule, ModelOutput::Probs(p), Target::Label(y)))
            .collect::<Result<Vec<_>>>()?;
        let set = CalibrationSet::new(scores)?;
        Ok(Self {
            rule,
            quantile: compute_quantile(&set, alpha)?,
        })
    }

    pub fn prediction_set(&self, probs: &[f64]) -> Result<PredictionSet> {
        prediction_set(&label_scores(self.rule, probs)?, &self.quantile)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tenths() -> CalibrationSet {
        CalibrationSet::new((1..=10).map(|i| i as f64 / 10.0)).unwrap()
    }

    #[test]
    fn quantile_picks_kth_order_statistic() {
        let q = compute_quantile(&tenths(), 0.5).unwrap();
        assert_eq!(q.value, 0.6);
        assert_eq!(q.n, 10);
    }

    #[test]
    fn single_score_quantile() {
        let set = CalibrationSet::new([0.5]).unwrap();
        assert_eq!(compute_quantile(&set, 0.5).unwrap().value, 0.5);
    }

    #[test]
    fn too_few_scores_give_infinite_quantile() {
        let q = compute_quantile(&tenths(), 0.05).unwrap();
        assert!(q.is_infinite());
    }

    #[test]
    fn rank_arithmetic() {
        assert_eq!(quantile_rank(1000, 0.1), 901);
        assert_eq!(quantile_rank(10, 0.05), 11);
        assert_eq!(quantile_rank(9, 0.1), 9);
        assert_eq!(quantile_rank(10, 0.5), 6);
    }

    #[test]
    fn empty_set_is_an_error() {
        let set = CalibrationSet::new(Vec::<f64>::new()).unwrap();
        assert_eq!(compute_quantile(&set, 0.1), Err(Error::EmptyCalibration));
    }

    #[test]
    fn bad_alpha_and_nan_scores_rejected() {
        assert!(matches!(compute_quantile(&tenths(), 0.0), Err(Error::InvalidAlpha(_))));
        assert!(matches!(compute_quantile(&tenths(), 1.0), Err(Error::InvalidAlpha(_))));
        assert!(matches!(
            CalibrationSet::new([0.1, f64::NAN]),
            Err(Error::NonFiniteScore { index: 1, .. })
        ));
    }

    #[test]
    fn prediction_set_thresholds() {
        let q = ConformalQuantile::fixed(0.5, 0.1);
        let set = prediction_set(&[0.2, 0.9, 0.4], &q).unwrap();
        assert_eq!(set.members(), &[0, 2]);
        assert_eq!(set.universe_size(), 3);
        assert!(prediction_set(&[0.8, 0.9], &q).unwrap().is_empty());
        let inf = ConformalQuantile::fixed(f64::INFINITY, 0.1);
        assert_eq!(prediction_set(&[5.0, 1e300, 0.0], &inf).unwrap().len(), 3);
    }

    #[test]
    fn ties_at_threshold_are_included() {
        let q = ConformalQuantile::fixed(0.5, 0.1);
        assert_eq!(prediction_set(&[0.5, 0.5, 0.6], &q).unwrap().members(), &[0, 1]);
    }

    #[test]
    fn scores_per_rule() {
        let r = score(NonconformityRule::Residual, ModelOutput::Point(2.0), Target::Value(3.5)).unwrap();
        assert_eq!(r, 1.5);
        let p = [0.7, 0.2, 0.1];
        let c = score(NonconformityRule::Confidence, ModelOutput::Probs(&p), Target::Label(0)).unwrap();
        assert!((c - 0.3).abs() < 1e-15);
        let one = [1.0, 0.0];
        let n = score(NonconformityRule::NegLogProb, ModelOutput::Probs(&one), Target::Label(0)).unwrap();
        assert_eq!(n, 0.0);
        let floor = score(NonconformityRule::NegLogProb, ModelOutput::Probs(&one), Target::Label(1)).unwrap();
        assert!((floor - 1e-12f64.ln().abs()).abs() < 1e-9);
    }

    #[test]
    fn score_errors() {
        let p = [0.7, 0.2, 0.1];
        assert_eq!(
            score(NonconformityRule::Confidence, ModelOutput::Probs(&p), Target::Label(3)),
            Err(Error::TargetOutOfRange { index: 3, len: 3 })
        );
        let bad = [0.7, 0.2];
        assert!(matches!(
            score(NonconformityRule::Confidence, ModelOutput::Probs(&bad), Target::Label(0)),
            Err(Error::MalformedDistribution(_))
        ));
        assert!(matches!(
            score(NonconformityRule::Residual, ModelOutput::Probs(&p), Target::Label(0)),
            Err(Error::RuleMismatch(_))
        ));
    }

    #[test]
    fn coverage_counts() {
        let q = ConformalQuantile::fixed(0.6, 0.1);
        assert_eq!(empirical_coverage(&q, &[0.1, 0.5, 0.7, 0.9]).unwrap(), 0.5);
        let inf = ConformalQuantile::fixed(f64::INFINITY, 0.1);
        assert_eq!(empirical_coverage(&inf, &[3.0, 9.0]).unwrap(), 1.0);
        assert!(empirical_coverage(&q, &[]).is_err());
    }

    #[test]
    fn insert_keeps_order() {
        let mut set = CalibrationSet::new([0.3, 0.1]).unwrap();
        set.insert(0.2).unwrap();
        assert_eq!(set.sorted(), &[0.1, 0.2, 0.3]);
        assert!(set.insert(f64::INFINITY).is_err());
    }

    #[test]
    fn calibrator_fit_and_sets() {
        let outs: Vec<(Vec<f64>, usize)> = vec![
            (vec![0.9, 0.1], 0),
            (vec![0.6, 0.4], 0),
            (vec![0.2, 0.8], 1),
        ];
        let cal = ConformalCalibrator::fit(
            NonconformityRule::Confidence,
            outs.iter().map(|(p, y)| (p.as_slice(), *y)),
            0.5,
        )
        .unwrap();
        // scores 0.1, 0.4, 0.2 -> k = ceil(4 * 0.5) = 2 -> 0.2
        assert!((cal.quantile.value - 0.2).abs() < 1e-12);
        assert_eq!(cal.prediction_set(&[0.85, 0.15]).unwrap().members(), &[0]);
    }

    #[test]
    fn quantile_json_roundtrip_with_infinity() {
        let q = ConformalQuantile::fixed(f64::INFINITY, 0.05);
        let s = serde_json::to_string(&q).unwrap();
        assert!(s.contains("null"));
        let back: ConformalQuantile = serde_json::from_str(&s).unwrap();
        assert!(back.is_infinite());
    }
}
