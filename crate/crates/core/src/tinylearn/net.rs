use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::Rng;

/// Hidden-layer nonlinearity. The output layer is always linear.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    None,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::None => z,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    #[inline]
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
            Activation::None => 1.0,
        }
    }
}

/// One affine layer. `weights` is row-major `outputs x inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
        }
    }

    #[inline]
    fn affine(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.weights.chunks_exact(self.inputs).zip(&self.biases).map(|(row, b)| {
            row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b
        }));
    }
}

/// A fully connected network: affine layers with `activation` between them.
/// With a single layer it is a softmax-linear classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseNet {
    pub layers: Vec<Layer>,
    pub activation: Activation,
}

/// Per-layer activations recorded during a forward pass.
#[derive(Debug, Clone, Default)]
pub struct Trace {
    /// `inputs[l]` fed layer `l`; `inputs[0]` is the sample itself.
    pub inputs: Vec<Vec<f64>>,
    /// Pre-activations of every layer; the last entry is the logits.
    pub pre: Vec<Vec<f64>>,
}

impl Trace {
    pub fn logits(&self) -> &[f64] {
        self.pre.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

impl DenseNet {
    /// Builds a network from explicit layers, checking that dimensions chain.
    pub fn from_layers(layers: Vec<Layer>, activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(invalid("layers", "need at least one layer"));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.inputs == 0 || l.outputs == 0 {
                return Err(invalid("layers", format!("layer {i} has a zero dimension")));
            }
            if l.weights.len() != l.inputs * l.outputs || l.biases.len() != l.outputs {
                return Err(invalid("layers", format!("layer {i} parameter count does not match its shape")));
            }
        }
        for pair in layers.windows(2) {
            if pair[0].outputs != pair[1].inputs {
                return Err(Error::DimensionMismatch {
                    expected: pair[0].outputs,
                    got: pair[1].inputs,
                });
            }
        }
        Ok(Self { layers, activation })
    }

    /// Glorot-uniform weights `U(-a, a)`, `a = sqrt(6 / (fan_in + fan_out))`,
    /// zero biases. `dims` lists layer widths from input to output.
    pub fn new(dims: &[usize], activation: Activation, rng: &mut Rng) -> Result<Self> {
        if dims.len() < 2 {
            return Err(invalid("dims", "need input and output widths"));
        }
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let mut layer = Layer::zeros(fan_in, fan_out);
                for v in &mut layer.weights {
                    *v = rng.random_range(-a..a);
                }
                layer
            })
            .collect();
        Self::from_layers(layers, activation)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("at least one layer").outputs
    }

    /// Layer widths from input to output.
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.outputs))
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(invalid("x", "input contains a non-finite feature"));
        }
        Ok(())
    }

    /// Logits for one input.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.forward_unchecked(x))
    }

    pub(crate) fn forward_unchecked(&self, x: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.affine(&cur, &mut next);
            if i < last {
                for v in &mut next {
                    *v = self.activation.apply(*v);
                }
            }
            std::mem::swap(&mut cur, &mut next);
        }
        cur
    }

    /// Forward pass that keeps what backpropagation needs.
    pub fn forward_trace(&self, x: &[f64]) -> Result<Trace> {
        self.check_input(x)?;
        let mut trace = Trace::default();
        let last = self.layers.len() - 1;
        let mut cur = x.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::with_capacity(layer.outputs);
            layer.affine(&cur, &mut z);
            let next = if i < last {
                z.iter().map(|v| self.activation.apply(*v)).collect()
            } else {
                Vec::new()
            };
            trace.inputs.push(std::mem::replace(&mut cur, next));
            trace.pre.push(z);
        }
        Ok(trace)
    }

    /// Accumulates `dlogits`-driven gradients of one traced sample into `grads`.
    pub(crate) fn backprop(&self, trace: &Trace, dlogits: &[f64], grads: &mut Gradients) {
        let mut delta = dlogits.to_vec();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let input = &trace.inputs[l];
            let g = &mut grads.layers[l];
            for (o, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                g.biases[o] += d;
                let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (gw, x) in row.iter_mut().zip(input) {
                    *gw += d * x;
                }
            }
            if l == 0 {
                break;
            }
            let below = &trace.pre[l - 1];
            let mut prev = vec![0.0; layer.inputs];
            for (o, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (p, w) in prev.iter_mut().zip(row) {
                    *p += d * w;
                }
            }
            for ((p, z), a) in prev.iter_mut().zip(below).zip(input) {
                *p *= self.activation.derivative(*z, *a);
            }
            delta = prev;
        }
    }

    /// Plain SGD with L2 weight decay: `theta <- theta - lr * (g + wd * theta)`.
    pub fn sgd_step(&mut self, grads: &Gradients, learning_rate: f64, weight_decay: f64) -> Result<()> {
        if !(learning_rate > 0.0) {
            return Err(invalid("learning_rate", format!("must be > 0, got {learning_rate}")));
        }
        if grads.layers.len() != self.layers.len() {
            return Err(Error::DimensionMismatch {
                expected: self.layers.len(),
                got: grads.layers.len(),
            });
        }
        for (layer, g) in self.layers.iter_mut().zip(&grads.layers) {
            for (w, gw) in layer.weights.iter_mut().zip(&g.weights) {
                *w -= learning_rate * (gw + weight_decay * *w);
            }
            for (b, gb) in layer.biases.iter_mut().zip(&g.biases) {
                *b -= learning_rate * (gb + weight_decay * *b);
            }
        }
        Ok(())
    }

    /// Index of the largest logit.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.forward(x)?))
    }

    /// Fraction of `(x, y)` pairs classified correctly.
    pub fn accuracy<'a>(&self, data: impl IntoIterator<Item = (&'a [f64], usize)>) -> Result<f64> {
        let mut hits = 0usize;
        let mut total = 0usize;
        for (x, y) in data {
            total += 1;
            if self.predict(x)? == y {
                hits += 1;
            }
        }
        if total == 0 {
            return Err(invalid("data", "accuracy of an empty set"));
        }
        Ok(hits as f64 / total as f64)
    }
}

/// Gradients shaped like a [`DenseNet`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn zeros_like(net: &DenseNet) -> Self {
        Self {
            layers: net.layers.iter().map(|l| Layer::zeros(l.inputs, l.outputs)).collect(),
        }
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.biases.iter_mut()).for_each(|v| *v *= s);
        }
    }

    /// All gradient components, layer by layer, weights before biases.
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases).copied())
            .collect()
    }
}

/// Index of the largest entry; the first one wins ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Numerically stable softmax of `logits / temperature`.
pub fn softmax_t(logits: &[f64], temperature: f64) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|z| ((z - max) / temperature).exp()).collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= total);
    out
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    softmax_t(logits, 1.0)
}

/// `log softmax(logits / temperature)`.
pub fn log_softmax_t(logits: &[f64], temperature: f64) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let shifted: Vec<f64> = logits.iter().map(|z| (z - max) / temperature).collect();
    let lse = shifted.iter().map(|s| s.exp()).sum::<f64>().ln();
    shifted.into_iter().map(|s| s - lse).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    #[test]
    fn zero_net_gives_uniform_softmax() {
        let net = DenseNet::from_layers(vec![Layer::zeros(3, 4)], Activation::None).unwrap();
        let z = net.forward(&[1.0, -2.0, 0.5]).unwrap();
        assert_eq!(z, vec![0.0; 4]);
        assert!(softmax(&z).iter().all(|p| (p - 0.25).abs() < 1e-15));
    }

    #[test]
    fn identity_layer() {
        let layer = Layer {
            inputs: 2,
            outputs: 2,
            weights: vec![1.0, 0.0, 0.0, 1.0],
            biases: vec![0.0, 0.0],
        };
        let net = DenseNet::from_layers(vec![layer], Activation::Relu).unwrap();
        assert_eq!(net.forward(&[1.0, 2.0]).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn dimension_errors() {
        let mut rng = stream(1, Stream::Init);
        let net = DenseNet::new(&[3, 5, 2], Activation::Tanh, &mut rng).unwrap();
        assert_eq!(net.dims(), vec![3, 5, 2]);
        assert!(matches!(net.forward(&[1.0]), Err(Error::DimensionMismatch { expected: 3, got: 1 })));
        let bad = DenseNet::from_layers(vec![Layer::zeros(3, 4), Layer::zeros(5, 2)], Activation::Relu);
        assert!(bad.is_err());
    }

    #[test]
    fn glorot_bounds_and_determinism() {
        let a = DenseNet::new(&[10, 6], Activation::None, &mut stream(3, Stream::Init)).unwrap();
        let b = DenseNet::new(&[10, 6], Activation::None, &mut stream(3, Stream::Init)).unwrap();
        assert_eq!(a, b);
        let bound = (6.0f64 / 16.0).sqrt();
        assert!(a.layers[0].weights.iter().all(|w| w.abs() < bound));
    }

    #[test]
    fn sgd_rules() {
        let mut net = DenseNet::new(&[2, 2], Activation::None, &mut stream(5, Stream::Init)).unwrap();
        let before = net.clone();
        net.sgd_step(&Gradients::zeros_like(&net), 0.5, 0.0).unwrap();
        assert_eq!(net, before);
        let g = Gradients { layers: net.layers.clone() };
        net.sgd_step(&g, 1.0, 0.0).unwrap();
        assert!(net.layers[0].weights.iter().all(|w| *w == 0.0));
        assert!(net.sgd_step(&g, 0.0, 0.0).is_err());
    }

    #[test]
    fn sgd_converges_on_quadratic() {
        // loss (theta - 3)^2, gradient 2 (theta - 3)
        let mut net = DenseNet::from_layers(
            vec![Layer { inputs: 1, outputs: 1, weights: vec![0.0], biases: vec![0.0] }],
            Activation::None,
        )
        .unwrap();
        for _ in 0..100 {
            let theta = net.layers[0].weights[0];
            let g = Gradients {
                layers: vec![Layer { inputs: 1, outputs: 1, weights: vec![2.0 * (theta - 3.0)], biases: vec![0.0] }],
            };
            net.sgd_step(&g, 0.25, 0.0).unwrap();
        }
        assert!((net.layers[0].weights[0] - 3.0).abs() < 1e-6);
    }

    #[test]
    fn log_softmax_matches_softmax() {
        let z = [1.0, -3.0, 0.25, 800.0];
        let p = softmax_t(&z, 2.0);
        let lp = log_softmax_t(&z, 2.0);
        for (a, b) in p.iter().zip(&lp) {
            assert!((a.ln().max(-700.0) - b.max(-700.0)).abs() < 1e-9);
        }
    }
}
