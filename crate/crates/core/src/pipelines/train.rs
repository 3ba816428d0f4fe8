use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::data::Dataset;
use crate::error::{invalid, Result};
use crate::rng::Rng;
use crate::tinylearn::{backward, Activation, DenseNet, LossSpec, Sample};

/// Architecture and optimizer settings for one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSpec {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
}

impl Default for TrainSpec {
    fn default() -> Self {
        Self {
            hidden: vec![64],
            activation: Activation::Tanh,
            epochs: 60,
            batch_size: 32,
            learning_rate: 0.05,
            weight_decay: 0.0,
        }
    }
}

impl TrainSpec {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(invalid("train", "epochs and batch_size must be positive"));
        }
        if !(self.learning_rate > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(invalid("train", "need learning_rate > 0 and weight_decay >= 0"));
        }
        if self.hidden.contains(&0) {
            return Err(invalid("hidden", "layer widths must be positive"));
        }
        Ok(())
    }

    pub fn build(&self, inputs: usize, outputs: usize, rng: &mut Rng) -> Result<DenseNet> {
        let mut dims = vec![inputs];
        dims.extend(&self.hidden);
        dims.push(outputs);
        DenseNet::new(&dims, self.activation, rng)
    }
}

/// One pass over `samples` in shuffled minibatches.
pub fn fit_epoch(net: &mut DenseNet, samples: &[Sample<'_>], loss: &LossSpec, train: &TrainSpec, rng: &mut Rng) -> Result<()> {
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(rng);
    let mut batch = Vec::with_capacity(train.batch_size);
    for chunk in order.chunks(train.batch_size) {
        batch.clear();
        batch.extend(chunk.iter().map(|&i| samples[i]));
        let out = backward(net, &batch, loss)?;
        net.sgd_step(&out.grads, train.learning_rate, train.weight_decay)?;
    }
    Ok(())
}

/// Plain cross-entropy training on `data`.
pub fn fit_supervised(net: &mut DenseNet, data: &Dataset, train: &TrainSpec, rng: &mut Rng) -> Result<()> {
    let samples: Vec<Sample<'_>> = data
        .iter()
        .map(|(x, y)| Sample { x, label: Some(y), guide: None, weight: 0.0 })
        .collect();
    let spec = LossSpec::cross_entropy();
    for _ in 0..train.epochs {
        fit_epoch(net, &samples, &spec, train, rng)?;
    }
    Ok(())
}

/// Logits for every row.
pub fn logits_of(net: &DenseNet, data: &Dataset) -> Result<Vec<Vec<f64>>> {
    data.x.iter().map(|x| net.forward(x)).collect()
}

/// Accuracy over a subset of rows selected by `keep`.
pub fn masked_accuracy(net: &DenseNet, data: &Dataset, mask: &[bool], keep: bool) -> Result<f64> {
    let mut hits = 0usize;
    let mut total = 0usize;
    for ((x, y), &m) in data.iter().zip(mask) {
        if m == keep {
            total += 1;
            hits += usize::from(net.predict(x)? == y);
        }
    }
    Ok(if total == 0 { f64::NAN } else { hits as f64 / total as f64 })
}
