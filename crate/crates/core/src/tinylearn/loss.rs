//! Weighted combined loss `lambda_task * L_task + w(x) * lambda_guide * L_guide`
//! and its exact gradient.
//!
//! The task term is averaged over the samples that carry a label; the guide
//! term is averaged over the samples that carry a guide target. A mixed batch
//! (labeled plus pseudo-labeled samples) therefore gets `L_s + lambda_u * L_u`
//! with each part normalized by its own sample count.

use serde::{Deserialize, Serialize};

use super::net::{log_softmax_t, softmax_t, DenseNet, Gradients};
use crate::error::{invalid, Error, Result};

/// Default distillation temperature.
pub const DEFAULT_KD_TEMPERATURE: f64 = 4.0;

/// Guidance term between the model and its guide.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GuideLoss {
    /// `T^2 * KL(softmax(t / T) || softmax(z / T))` against guide logits `t`.
    KlDivergence { temperature: f64 },
    /// `mean_k (z_k - t_k)^2` on raw logits.
    MseLogits,
    /// Cross-entropy against a hard guide label.
    CrossEntropyHard,
}

/// What a sample's guide term compares against.
#[derive(Debug, Clone, Copy)]
pub enum GuideTarget<'a> {
    Logits(&'a [f64]),
    Label(usize),
}

/// One training example.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub x: &'a [f64],
    /// Ground-truth label for the task term.
    pub label: Option<usize>,
    /// Guide target for the guide term.
    pub guide: Option<GuideTarget<'a>>,
    /// Per-sample guide weight `w(x)` in `[0, 1]`.
    pub weight: f64,
}

/// Coefficients and loss kinds of the combined objective. The task loss is
/// always cross-entropy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub lambda_task: f64,
    pub lambda_guide: f64,
    pub guide: Option<GuideLoss>,
}

impl LossSpec {
    pub fn cross_entropy() -> Self {
        Self {
            lambda_task: 1.0,
            lambda_guide: 0.0,
            guide: None,
        }
    }

    pub fn with_guide(guide: GuideLoss, lambda_task: f64, lambda_guide: f64) -> Self {
        Self {
            lambda_task,
            lambda_guide,
            guide: Some(guide),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_task >= 0.0) || !(self.lambda_guide >= 0.0) {
            return Err(invalid("lambda", "coefficients must be >= 0"));
        }
        if self.lambda_task == 0.0 && self.lambda_guide == 0.0 {
            return Err(invalid("lambda", "task and guide coefficients are both zero"));
        }
        if let Some(GuideLoss::KlDivergence { temperature }) = self.guide {
            if !(temperature > 0.0) {
                return Err(invalid("temperature", format!("must be > 0, got {temperature}")));
            }
        }
        Ok(())
    }
}

/// Loss value and gradients of one batch.
#[derive(Debug, Clone)]
pub struct LossAndGrad {
    pub loss: f64,
    pub task_loss: f64,
    pub guide_loss: f64,
    pub grads: Gradients,
}

struct TermCounts {
    task: usize,
    guide: usize,
}

fn validate_batch(net: &DenseNet, batch: &[Sample<'_>], spec: &LossSpec) -> Result<TermCounts> {
    spec.validate()?;
    let k = net.output_dim();
    let mut counts = TermCounts { task: 0, guide: 0 };
    for s in batch {
        if !(0.0..=1.0).contains(&s.weight) {
            return Err(invalid("weight", format!("per-sample weight {} outside [0, 1]", s.weight)));
        }
        if let Some(y) = s.label {
            if y >= k {
                return Err(Error::TargetOutOfRange { index: y, len: k });
            }
            counts.task += 1;
        }
        match (spec.guide, s.guide) {
            (None, Some(_)) => return Err(invalid("guide", "guide target given but no guide loss configured")),
            (Some(_), None) | (None, None) => {}
            (Some(GuideLoss::CrossEntropyHard), Some(GuideTarget::Label(y))) => {
                if y >= k {
                    return Err(Error::TargetOutOfRange { index: y, len: k });
                }
                counts.guide += 1;
            }
            (Some(GuideLoss::CrossEntropyHard), Some(GuideTarget::Logits(_))) => {
                return Err(invalid("guide", "hard cross-entropy guide needs a label"))
            }
            (Some(_), Some(GuideTarget::Logits(t))) => {
                if t.len() != k {
                    return Err(Error::DimensionMismatch { expected: k, got: t.len() });
                }
                counts.guide += 1;
            }
            (Some(_), Some(GuideTarget::Label(_))) => {
                return Err(invalid("guide", "logit guide loss needs guide logits"))
            }
        }
    }
    Ok(counts)
}

/// Cross-entropy of `logits` against `label`, and `dL/dlogits`.
fn cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let logp = log_softmax_t(logits, 1.0);
    let mut grad: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
    grad[label] -= 1.0;
    (-logp[label], grad)
}

/// Guide term value and `dL/dlogits` for one sample.
fn guide_term(kind: GuideLoss, logits: &[f64], target: GuideTarget<'_>) -> (f64, Vec<f64>) {
    match (kind, target) {
        (GuideLoss::KlDivergence { temperature: t }, GuideTarget::Logits(teacher)) => {
            let log_pt = log_softmax_t(teacher, t);
            let log_ps = log_softmax_t(logits, t);
            let ps = softmax_t(logits, t);
            let mut kl = 0.0;
            let mut grad = Vec::with_capacity(logits.len());
            for ((lt, ls), p) in log_pt.iter().zip(&log_ps).zip(&ps) {
                let pt = lt.exp();
                if pt > 0.0 {
                    kl += pt * (lt - ls);
                }
                // d/dz [T^2 KL] = T (p_s - p_t)
                grad.push(t * (p - pt));
            }
            (t * t * kl.max(0.0), grad)
        }
        (GuideLoss::MseLogits, GuideTarget::Logits(target)) => {
            let k = logits.len() as f64;
            let mut loss = 0.0;
            let grad = logits
                .iter()
                .zip(target)
                .map(|(z, t)| {
                    let d = z - t;
                    loss += d * d;
                    2.0 * d / k
                })
                .collect();
            (loss / k, grad)
        }
        (GuideLoss::CrossEntropyHard, GuideTarget::Label(y)) => cross_entropy(logits, y),
        _ => unreachable!("validated by validate_batch"),
    }
}

fn run(net: &DenseNet, batch: &[Sample<'_>], spec: &LossSpec, with_grads: bool) -> Result<LossAndGrad> {
    let counts = validate_batch(net, batch, spec)?;
    let task_scale = if counts.task > 0 {
        spec.lambda_task / counts.task as f64
    } else {
        0.0
    };
    let guide_scale = if counts.guide > 0 {
        spec.lambda_guide / counts.guide as f64
    } else {
        0.0
    };
    let mut grads = Gradients::zeros_like(net);
    let mut task_total = 0.0;
    let mut guide_total = 0.0;
    for (i, s) in batch.iter().enumerate() {
        let trace = net.forward_trace(s.x)?;
        let logits = trace.logits();
        let mut dlogits = vec![0.0; logits.len()];
        let mut task_loss = 0.0;
        let mut guide_loss = 0.0;
        if let (Some(y), true) = (s.label, task_scale > 0.0) {
            let (l, g) = cross_entropy(logits, y);
            task_loss = l;
            dlogits.iter_mut().zip(&g).for_each(|(d, g)| *d += task_scale * g);
        }
        // zero weight or zero coefficient contributes nothing, not 0 * value
        if let (Some(kind), Some(target)) = (spec.guide, s.guide) {
            if guide_scale > 0.0 && s.weight > 0.0 {
                let (l, g) = guide_term(kind, logits, target);
                guide_loss = s.weight * l;
                let c = guide_scale * s.weight;
                dlogits.iter_mut().zip(&g).for_each(|(d, g)| *d += c * g);
            }
        }
        if !task_loss.is_finite() || !guide_loss.is_finite() || dlogits.iter().any(|d| !d.is_finite()) {
            return Err(Error::NonFiniteLoss {
                batch_len: batch.len(),
                sample: i,
                task_loss,
                guide_loss,
            });
        }
        task_total += task_loss;
        guide_total += guide_loss;
        if with_grads {
            net.backprop(&trace, &dlogits, &mut grads);
        }
    }
    let task_loss = task_total * task_scale;
    let guide_loss = guide_total * guide_scale;
    Ok(LossAndGrad {
        loss: task_loss + guide_loss,
        task_loss,
        guide_loss,
        grads,
    })
}

/// Loss and exact gradients of the weighted combined objective over `batch`.
pub fn backward(net: &DenseNet, batch: &[Sample<'_>], spec: &LossSpec) -> Result<LossAndGrad> {
    run(net, batch, spec, true)
}

/// Loss value only.
pub fn loss(net: &DenseNet, batch: &[Sample<'_>], spec: &LossSpec) -> Result<f64> {
    Ok(run(net, batch, spec, false)?.loss)
}

/// Softened KL divergence `T^2 KL(softmax(t/T) || softmax(z/T))` for two
/// logit vectors.
pub fn kd_divergence(student: &[f64], teacher: &[f64], temperature: f64) -> f64 {
    guide_term(
        GuideLoss::KlDivergence { temperature },
        student,
        GuideTarget::Logits(teacher),
    )
    .0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};
    use crate::tinylearn::Activation;

    fn net() -> DenseNet {
        DenseNet::new(&[3, 4, 3], Activation::Tanh, &mut stream(11, Stream::Init)).unwrap()
    }

    #[test]
    fn zero_guide_coefficient_equals_pure_cross_entropy() {
        let net = net();
        let x = [0.3, -0.2, 1.0];
        let t = [2.0, -1.0, 0.0];
        let guided = [Sample { x: &x, label: Some(1), guide: Some(GuideTarget::Logits(&t)), weight: 1.0 }];
        let plain = [Sample { x: &x, label: Some(1), guide: None, weight: 1.0 }];
        let kd = LossSpec::with_guide(GuideLoss::KlDivergence { temperature: 4.0 }, 1.0, 0.0);
        let a = backward(&net, &guided, &kd).unwrap();
        let b = backward(&net, &plain, &LossSpec::cross_entropy()).unwrap();
        assert_eq!(a.grads, b.grads);
        assert_eq!(a.loss, b.loss);
    }

    #[test]
    fn zero_weights_drop_guide_gradient() {
        let net = net();
        let x = [0.3, -0.2, 1.0];
        let t = [2.0, -1.0, 0.0];
        let spec = LossSpec::with_guide(GuideLoss::MseLogits, 0.0, 1.0);
        let out = backward(
            &net,
            &[Sample { x: &x, label: None, guide: Some(GuideTarget::Logits(&t)), weight: 0.0 }],
            &spec,
        )
        .unwrap();
        assert!(out.grads.flatten().iter().all(|g| *g == 0.0));
        assert_eq!(out.guide_loss, 0.0);
    }

    #[test]
    fn kl_is_zero_for_matching_logits_and_positive_otherwise() {
        let z = [0.5, -1.0, 2.0];
        assert!(kd_divergence(&z, &z, 4.0).abs() < 1e-12);
        // shifting all logits leaves the softened distribution unchanged
        let shifted = [3.5, 2.0, 5.0];
        assert!(kd_divergence(&z, &shifted, 4.0).abs() < 1e-12);
        assert!(kd_divergence(&z, &[2.0, 0.0, -1.0], 4.0) > 0.0);
    }

    #[test]
    fn mismatched_targets_rejected() {
        let net = net();
        let x = [0.0; 3];
        let spec = LossSpec::with_guide(GuideLoss::CrossEntropyHard, 1.0, 1.0);
        let t = [0.0; 3];
        let bad = [Sample { x: &x, label: None, guide: Some(GuideTarget::Logits(&t)), weight: 1.0 }];
        assert!(backward(&net, &bad, &spec).is_err());
        let no_guide = [Sample { x: &x, label: Some(0), guide: Some(GuideTarget::Label(0)), weight: 1.0 }];
        assert!(backward(&net, &no_guide, &LossSpec::cross_entropy()).is_err());
        let heavy = [Sample { x: &x, label: Some(0), guide: None, weight: 1.5 }];
        assert!(backward(&net, &heavy, &spec).is_err());
        assert!(LossSpec::with_guide(GuideLoss::MseLogits, 0.0, 0.0).validate().is_err());
        assert!(LossSpec::with_guide(GuideLoss::KlDivergence { temperature: 0.0 }, 1.0, 1.0)
            .validate()
            .is_err());
    }

    #[test]
    fn non_finite_loss_reports_sample() {
        let net = net();
        let x = [0.0; 3];
        let t = [f64::MAX, -f64::MAX, 0.0];
        let spec = LossSpec::with_guide(GuideLoss::MseLogits, 1.0, 1.0);
        let batch = [
            Sample { x: &x, label: Some(0), guide: None, weight: 1.0 },
            Sample { x: &x, label: Some(0), guide: Some(GuideTarget::Logits(&t)), weight: 1.0 },
        ];
        match backward(&net, &batch, &spec) {
            Err(Error::NonFiniteLoss { batch_len: 2, sample: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }
}
