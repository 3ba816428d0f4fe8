use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::data::{augment, pick, AugmentSpec, Dataset, Strength, SyntheticTask, TaskSpec};
use crate::conformal::{compute_quantile, label_scores, prediction_set_size, CalibrationSet, NonconformityRule};
use crate::error::{invalid, Error, Result};
use crate::record::RunRecord;
use crate::rng::{stream, Rng, Stream};
use crate::tinylearn::{argmax, backward, softmax, Activation, DenseNet, GuideLoss, GuideTarget, LossSpec, Sample};
use crate::weighting::{uncertainty, weight, UncertaintyMapping, WeightRule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SslMethod {
    /// Every surviving pseudo-label counts fully.
    Unweighted,
    /// Surviving pseudo-labels are weighted by `exp(-gamma * u)`.
    AdaConG,
}

impl SslMethod {
    pub const ALL: [SslMethod; 2] = [SslMethod::Unweighted, SslMethod::AdaConG];

    pub fn name(self) -> &'static str {
        match self {
            SslMethod::Unweighted => "unweighted",
            SslMethod::AdaConG => "adacong",
        }
    }
}

impl fmt::Display for SslMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SslMethod {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        SslMethod::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown ssl method `{s}`"))
    }
}

/// Unlabeled loss between the strong view and the weak view's output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SslGuide {
    /// Cross-entropy against the hard pseudo-label.
    CrossEntropy,
    /// Squared error against the weak view's logits.
    Mse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SslConfig {
    pub task: TaskSpec,
    pub labeled_per_class: usize,
    pub unlabeled_n: usize,
    pub test_n: usize,
    pub augment: AugmentSpec,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub iterations: usize,
    pub unlabeled_batch: usize,
    /// Pseudo-label confidence cutoff; `None` keeps every pseudo-label.
    pub threshold: Option<f64>,
    pub lambda_u: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub recalibrate_every: usize,
    pub eval_every: usize,
    pub guide: SslGuide,
    /// Replaces every computed conformal weight.
    pub force_weight: Option<f64>,
}

impl Default for SslConfig {
    fn default() -> Self {
        Self {
            task: TaskSpec::default(),
            labeled_per_class: 4,
            unlabeled_n: 4000,
            test_n: 2000,
            augment: AugmentSpec::default(),
            hidden: vec![64],
            activation: Activation::Tanh,
            learning_rate: 0.05,
            weight_decay: 0.0,
            iterations: 1000,
            unlabeled_batch: 64,
            threshold: Some(0.95),
            lambda_u: 1.0,
            alpha: 0.05,
            gamma: 8.0,
            recalibrate_every: 50,
            eval_every: 50,
            guide: SslGuide::CrossEntropy,
            force_weight: None,
        }
    }
}

impl SslConfig {
    pub fn validate(&self) -> Result<()> {
        if self.labeled_per_class == 0 {
            return Err(Error::EmptyLabeledSet);
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidAlpha(self.alpha));
        }
        if self.iterations == 0 || self.unlabeled_batch == 0 || self.recalibrate_every == 0 || self.eval_every == 0 {
            return Err(invalid("ssl", "iterations, batch and cadences must be positive"));
        }
        if self.unlabeled_n == 0 {
            return Err(invalid("unlabeled_n", "unlabeled pool is empty"));
        }
        if !(self.learning_rate > 0.0) || !(self.weight_decay >= 0.0) || !(self.lambda_u >= 0.0) || !(self.gamma > 0.0) {
            return Err(invalid("ssl", "need learning_rate > 0, gamma > 0, weight_decay >= 0, lambda_u >= 0"));
        }
        if let Some(t) = self.threshold {
            if !(0.0..=1.0).contains(&t) {
                return Err(invalid("threshold", format!("must lie in [0, 1], got {t}")));
            }
        }
        if let Some(w) = self.force_weight {
            if !(0.0..=1.0).contains(&w) {
                return Err(invalid("force_weight", format!("must lie in [0, 1], got {w}")));
            }
        }
        Ok(())
    }

    fn loss_spec(&self) -> LossSpec {
        let guide = match self.guide {
            SslGuide::CrossEntropy => GuideLoss::CrossEntropyHard,
            SslGuide::Mse => GuideLoss::MseLogits,
        };
        LossSpec::with_guide(guide, 1.0, self.lambda_u)
    }
}

/// One unlabeled sample prepared for the guide term.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabel {
    pub weak: Vec<f64>,
    pub strong: Vec<f64>,
    pub weak_logits: Vec<f64>,
    /// Present only when the confidence clears the threshold.
    pub label: Option<usize>,
    pub confidence: f64,
    pub set_size: usize,
    pub weight: f64,
}

/// Labeled, unlabeled and test draws of one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SslData {
    pub task: SyntheticTask,
    pub labeled: Dataset,
    pub unlabeled: Dataset,
    pub test: Dataset,
}

pub fn prepare_ssl(cfg: &SslConfig, seed: u64) -> Result<SslData> {
    cfg.validate()?;
    let task = SyntheticTask::generate(&cfg.task, seed)?;
    let mut rng = stream(seed, Stream::Data);
    let labeled = task.sample(cfg.labeled_per_class * cfg.task.k, &mut rng)?;
    let unlabeled = task.sample(cfg.unlabeled_n.max(cfg.task.k), &mut rng)?;
    let test = task.sample(cfg.test_n.max(cfg.task.k), &mut rng)?;
    Ok(SslData { task, labeled, unlabeled, test })
}

/// Conformal quantile of the model's confidence scores on weakly augmented
/// labeled data.
pub fn calibrate_labeled(net: &DenseNet, labeled: &Dataset, spec: &AugmentSpec, alpha: f64, rng: &mut Rng) -> Result<f64> {
    if labeled.is_empty() {
        return Err(Error::EmptyLabeledSet);
    }
    let scores = labeled
        .iter()
        .map(|(x, y)| {
            let probs = softmax(&net.forward(&augment(x, Strength::Weak, spec, rng))?);
            Ok((1.0 - probs[y]).clamp(0.0, 1.0))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(compute_quantile(&CalibrationSet::new(scores)?, alpha)?.value)
}

/// Weak/strong views, pseudo-label and weight of one unlabeled input.
pub fn pseudo_label(
    net: &DenseNet,
    x: &[f64],
    cfg: &SslConfig,
    method: SslMethod,
    quantile: f64,
    rng: &mut Rng,
) -> Result<PseudoLabel> {
    let weak = augment(x, Strength::Weak, &cfg.augment, rng);
    let strong = augment(x, Strength::Strong, &cfg.augment, rng);
    let weak_logits = net.forward(&weak)?;
    let probs = softmax(&weak_logits);
    let top = argmax(&probs);
    let confidence = probs[top];
    let set_size = prediction_set_size(&label_scores(NonconformityRule::Confidence, &probs)?, quantile);
    let u = uncertainty(UncertaintyMapping::NormalizedSetSize { universe: probs.len() }, set_size)?;
    let w = match method {
        SslMethod::Unweighted => 1.0,
        SslMethod::AdaConG => weight(WeightRule::ExpDecay { gamma: cfg.gamma }, u, None)?,
    };
    let keep = cfg.threshold.is_none_or(|t| confidence >= t);
    Ok(PseudoLabel {
        weak,
        strong,
        weak_logits,
        label: keep.then_some(top),
        confidence,
        set_size,
        weight: if keep { cfg.force_weight.unwrap_or(w) } else { 0.0 },
    })
}

#[derive(Debug, Clone)]
pub struct SslRun {
    pub method: SslMethod,
    pub seed: u64,
    pub record: RunRecord,
    pub model: DenseNet,
    pub final_accuracy: f64,
}

pub fn run_ssl(cfg: &SslConfig, method: SslMethod, seed: u64) -> Result<SslRun> {
    let data = prepare_ssl(cfg, seed)?;
    run_ssl_on(cfg, method, seed, &data)
}

/// Trains on `L_s + lambda_u * L_u`, where `L_u` averages the weighted guide
/// loss over the whole unlabeled batch.
pub fn run_ssl_on(cfg: &SslConfig, method: SslMethod, seed: u64, data: &SslData) -> Result<SslRun> {
    cfg.validate()?;
    if data.labeled.is_empty() {
        return Err(Error::EmptyLabeledSet);
    }
    let mut dims = vec![cfg.task.dim];
    dims.extend(&cfg.hidden);
    dims.push(cfg.task.k);
    let mut net = DenseNet::new(&dims, cfg.activation, &mut stream(seed, Stream::Init))?;
    let mut batch_rng = stream(seed, Stream::Batches);
    let mut aug_rng = stream(seed, Stream::Augment);
    let spec = cfg.loss_spec();
    let mut record = RunRecord::new(format!("ssl-{}-s{seed}", method.name()), seed);

    let mut quantile = f64::INFINITY;
    let (mut kept, mut correct, mut seen, mut weight_sum) = (0usize, 0usize, 0usize, 0.0);
    let mut final_accuracy = 0.0;
    for it in 0..cfg.iterations {
        if it % cfg.recalibrate_every == 0 {
            quantile = calibrate_labeled(&net, &data.labeled, &cfg.augment, cfg.alpha, &mut aug_rng)?;
        }
        let weak_labeled: Vec<Vec<f64>> = data
            .labeled
            .x
            .iter()
            .map(|x| augment(x, Strength::Weak, &cfg.augment, &mut aug_rng))
            .collect();
        let mut pseudo = Vec::with_capacity(cfg.unlabeled_batch);
        let mut truth = Vec::with_capacity(cfg.unlabeled_batch);
        for _ in 0..cfg.unlabeled_batch {
            let i = pick(&mut batch_rng, data.unlabeled.len());
            pseudo.push(pseudo_label(&net, &data.unlabeled.x[i], cfg, method, quantile, &mut aug_rng)?);
            truth.push(data.unlabeled.y[i]);
        }
        let mut batch: Vec<Sample<'_>> = weak_labeled
            .iter()
            .zip(&data.labeled.y)
            .map(|(x, &y)| Sample { x, label: Some(y), guide: None, weight: 0.0 })
            .collect();
        for p in &pseudo {
            let target = match (cfg.guide, p.label) {
                (SslGuide::CrossEntropy, Some(l)) => GuideTarget::Label(l),
                // a dropped sample still counts in the average with weight 0
                (SslGuide::CrossEntropy, None) => GuideTarget::Label(argmax(&p.weak_logits)),
                (SslGuide::Mse, _) => GuideTarget::Logits(&p.weak_logits),
            };
            batch.push(Sample { x: &p.strong, label: None, guide: Some(target), weight: p.weight });
        }
        let out = backward(&net, &batch, &spec)?;
        net.sgd_step(&out.grads, cfg.learning_rate, cfg.weight_decay)?;

        for (p, &y) in pseudo.iter().zip(&truth) {
            seen += 1;
            weight_sum += p.weight;
            if let Some(l) = p.label {
                kept += 1;
                correct += usize::from(l == y);
            }
        }
        if (it + 1) % cfg.eval_every == 0 || it + 1 == cfg.iterations {
            let step = (it + 1) as u64;
            final_accuracy = net.accuracy(data.test.iter())?;
            record.push(step, "test/accuracy", final_accuracy);
            if kept > 0 {
                record.push(step, "pseudo/precision", correct as f64 / kept as f64);
            }
            record.push(step, "pseudo/mask_rate", kept as f64 / seen.max(1) as f64);
            record.push(step, "guide/mean_weight", weight_sum / seen.max(1) as f64);
            record.push(step, "guide/quantile", quantile);
            (kept, correct, seen, weight_sum) = (0, 0, 0, 0.0);
        }
    }
    Ok(SslRun { method, seed, record, model: net, final_accuracy })
}

/// Accuracy of `net` on one augmented view of every row.
pub fn view_accuracy(net: &DenseNet, data: &Dataset, strength: Strength, spec: &AugmentSpec, rng: &mut Rng) -> Result<f64> {
    let mut hits = 0usize;
    for (x, y) in data.iter() {
        hits += usize::from(net.predict(&augment(x, strength, spec, rng))? == y);
    }
    Ok(hits as f64 / data.len().max(1) as f64)
}
