#![allow(dead_code)]

use adacong::rng::{stream, Stream};
use adacong::tinylearn::{backward, Activation, DenseNet, GuideLoss, GuideTarget, LossSpec, Sample};
use rand::Rng as _;

/// Logits by explicit loops over the layer parameters.
pub fn oracle_forward(net: &DenseNet, x: &[f64]) -> Vec<f64> {
    let mut a = x.to_vec();
    let last = net.layers.len() - 1;
    for (l, layer) in net.layers.iter().enumerate() {
        let mut z = vec![0.0; layer.outputs];
        for o in 0..layer.outputs {
            let mut s = layer.biases[o];
            for i in 0..layer.inputs {
                s += layer.weights[o * layer.inputs + i] * a[i];
            }
            z[o] = s;
        }
        if l < last {
            for v in &mut z {
                *v = match net.activation {
                    Activation::Relu => v.max(0.0),
                    Activation::Tanh => v.tanh(),
                    Activation::None => *v,
                };
            }
        }
        a = z;
    }
    a
}

fn log_softmax(z: &[f64], t: f64) -> Vec<f64> {
    let s: Vec<f64> = z.iter().map(|v| v / t).collect();
    let m = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + s.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    s.iter().map(|v| v - lse).collect()
}

/// Owned training example for the oracle.
#[derive(Debug, Clone)]
pub struct OwnedSample {
    pub x: Vec<f64>,
    pub label: Option<usize>,
    pub guide_logits: Option<Vec<f64>>,
    pub guide_label: Option<usize>,
    pub weight: f64,
}

/// Weighted combined loss written from its definition.
pub fn oracle_loss(net: &DenseNet, batch: &[OwnedSample], spec: &LossSpec) -> f64 {
    let n_task = batch.iter().filter(|s| s.label.is_some()).count();
    let n_guide = batch.iter().filter(|s| s.guide_logits.is_some() || s.guide_label.is_some()).count();
    let mut task = 0.0;
    let mut guide = 0.0;
    for s in batch {
        let z = oracle_forward(net, &s.x);
        if let Some(y) = s.label {
            task -= log_softmax(&z, 1.0)[y];
        }
        let g = match (spec.guide, &s.guide_logits, s.guide_label) {
            (Some(GuideLoss::KlDivergence { temperature: t }), Some(tl), _) => {
                let lt = log_softmax(tl, t);
                let ls = log_softmax(&z, t);
                t * t * lt.iter().zip(&ls).map(|(a, b)| a.exp() * (a - b)).sum::<f64>()
            }
            (Some(GuideLoss::MseLogits), Some(tl), _) => {
                z.iter().zip(tl).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / z.len() as f64
            }
            (Some(GuideLoss::CrossEntropyHard), _, Some(y)) => -log_softmax(&z, 1.0)[y],
            _ => 0.0,
        };
        guide += s.weight * g;
    }
    let t = if n_task > 0 { spec.lambda_task * task / n_task as f64 } else { 0.0 };
    let g = if n_guide > 0 { spec.lambda_guide * guide / n_guide as f64 } else { 0.0 };
    t + g
}

pub fn as_samples(batch: &[OwnedSample]) -> Vec<Sample<'_>> {
    batch
        .iter()
        .map(|s| Sample {
            x: &s.x,
            label: s.label,
            guide: match (&s.guide_logits, s.guide_label) {
                (Some(t), _) => Some(GuideTarget::Logits(t)),
                (None, Some(y)) => Some(GuideTarget::Label(y)),
                (None, None) => None,
            },
            weight: s.weight,
        })
        .collect()
}

/// Every loss combination the toolkit trains with.
pub fn loss_combinations() -> Vec<LossSpec> {
    vec![
        LossSpec::cross_entropy(),
        LossSpec::with_guide(GuideLoss::KlDivergence { temperature: 4.0 }, 1.0, 1.0),
        LossSpec::with_guide(GuideLoss::KlDivergence { temperature: 1.5 }, 0.7, 0.4),
        LossSpec::with_guide(GuideLoss::MseLogits, 1.0, 1.0),
        LossSpec::with_guide(GuideLoss::CrossEntropyHard, 1.0, 1.0),
        LossSpec::with_guide(GuideLoss::KlDivergence { temperature: 4.0 }, 0.0, 1.0),
    ]
}

fn random_batch(net: &DenseNet, spec: &LossSpec, rng: &mut adacong::rng::Rng) -> Vec<OwnedSample> {
    let (d, k) = (net.input_dim(), net.output_dim());
    (0..rng.random_range(1..6))
        .map(|_| {
            let x = (0..d).map(|_| rng.random_range(-1.5..1.5)).collect();
            let label = rng.random_bool(0.8).then(|| rng.random_range(0..k));
            let (mut guide_logits, mut guide_label) = (None, None);
            match spec.guide {
                Some(GuideLoss::CrossEntropyHard) => guide_label = Some(rng.random_range(0..k)),
                Some(_) => guide_logits = Some((0..k).map(|_| rng.random_range(-3.0..3.0)).collect()),
                None => {}
            }
            OwnedSample { x, label, guide_logits, guide_label, weight: rng.random_range(0.0..=1.0) }
        })
        .collect()
}

/// Largest relative error between analytic and central-difference gradients
/// over `nets` random networks and every loss combination.
pub fn worst_gradient_error(nets: u64, h: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for seed in 0..nets {
        let mut rng = stream(seed, Stream::Custom(99));
        let mut dims = vec![rng.random_range(2..6)];
        for _ in 0..rng.random_range(0..3) {
            dims.push(rng.random_range(2..7));
        }
        dims.push(rng.random_range(2..6));
        let act = [Activation::Tanh, Activation::Relu, Activation::None][seed as usize % 3];
        let mut net = DenseNet::new(&dims, act, &mut rng).unwrap();
        for l in &mut net.layers {
            for b in &mut l.biases {
                *b = rng.random_range(-0.5..0.5);
            }
        }
        for spec in loss_combinations() {
            let mut batch = random_batch(&net, &spec, &mut rng);
            // the task term needs at least one label
            batch[0].label.get_or_insert(0);
            let analytic = backward(&net, &as_samples(&batch), &spec).unwrap().grads.flatten();
            let mut idx = 0;
            for l in 0..net.layers.len() {
                let n_w = net.layers[l].weights.len();
                let n_b = net.layers[l].biases.len();
                for p in 0..n_w + n_b {
                    let mut plus = net.clone();
                    let mut minus = net.clone();
                    if p < n_w {
                        plus.layers[l].weights[p] += h;
                        minus.layers[l].weights[p] -= h;
                    } else {
                        plus.layers[l].biases[p - n_w] += h;
                        minus.layers[l].biases[p - n_w] -= h;
                    }
                    let fd = (oracle_loss(&plus, &batch, &spec) - oracle_loss(&minus, &batch, &spec)) / (2.0 * h);
                    let g = analytic[idx];
                    let scale = g.abs().max(fd.abs());
                    if scale > 1e-7 {
                        worst = worst.max((g - fd).abs() / scale);
                    }
                    idx += 1;
                }
            }
        }
    }
    worst
}

/// Bit-level equality of two metric series, ignoring run ids.
pub fn same_series(a: &adacong::record::RunRecord, b: &adacong::record::RunRecord) -> bool {
    a.points.len() == b.points.len()
        && a.points.iter().zip(&b.points).all(|(p, q)| p.step == q.step && p.metric == q.metric && p.value.to_bits() == q.value.to_bits())
}

/// Small KD setup for reduction checks.
pub fn small_kd() -> adacong::pipelines::KdConfig {
    use adacong::pipelines::{KdConfig, TaskSpec, TrainSpec};
    KdConfig {
        task: TaskSpec { k: 4, dim: 8, separation: 0.8, ..TaskSpec::default() },
        source_n: 400,
        target_n: 200,
        test_n: 200,
        teacher: TrainSpec { hidden: vec![16], epochs: 10, ..TrainSpec::default() },
        student: TrainSpec { hidden: vec![16], epochs: 8, ..TrainSpec::default() },
        ..KdConfig::default()
    }
}

/// Small SSL setup for reduction checks.
pub fn small_ssl() -> adacong::pipelines::SslConfig {
    use adacong::pipelines::{SslConfig, TaskSpec};
    SslConfig {
        task: TaskSpec { k: 4, dim: 8, ..TaskSpec::default() },
        unlabeled_n: 300,
        test_n: 200,
        hidden: vec![16],
        iterations: 120,
        recalibrate_every: 20,
        eval_every: 40,
        ..SslConfig::default()
    }
}

/// Sort, then index with an integer-only rank.
pub fn oracle_quantile(scores: &[f64], alpha_permille: u64) -> f64 {
    let mut v = scores.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len() as u64;
    // ceil((n + 1) * (1000 - a) / 1000) in exact integers
    let num = (n + 1) * (1000 - alpha_permille);
    let k = num.div_ceil(1000);
    if k > n {
        f64::INFINITY
    } else {
        v[(k - 1) as usize]
    }
}
