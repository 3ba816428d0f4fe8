use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::{stream, Rng, Stream};

/// Gaussian-mixture classification task with per-dimension feature scales.
///
/// A point of class `y` is `scale * (mean_y + sigma * z)` with `z ~ N(0, I)`.
/// Dimensions with a small scale carry the same class information in a
/// narrower range, so additive corruption swamps them first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTask {
    pub k: usize,
    pub dim: usize,
    pub class_means: Vec<Vec<f64>>,
    pub within_class_sigma: f64,
    pub scales: Vec<f64>,
    pub seed: u64,
}

/// Parameters of [`SyntheticTask::generate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskSpec {
    pub k: usize,
    pub dim: usize,
    /// Standard deviation of the class-mean coordinates.
    pub separation: f64,
    pub within_class_sigma: f64,
    /// Number of leading dimensions drawn at `fine_scale`.
    pub fine_dims: usize,
    pub fine_scale: f64,
    /// Class-mean spread multiplier on the fine dimensions.
    pub fine_separation: f64,
}

impl Default for TaskSpec {
    fn default() -> Self {
        Self {
            k: 10,
            dim: 32,
            separation: 1.0,
            within_class_sigma: 1.0,
            fine_dims: 0,
            fine_scale: 1.0,
            fine_separation: 1.0,
        }
    }
}

/// Features and labels.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], usize)> + '_ {
        self.x.iter().map(Vec::as_slice).zip(self.y.iter().copied())
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            x: indices.iter().map(|&i| self.x[i].clone()).collect(),
            y: indices.iter().map(|&i| self.y[i]).collect(),
        }
    }
}

impl SyntheticTask {
    /// Draws class means from the task seed.
    pub fn generate(spec: &TaskSpec, seed: u64) -> Result<Self> {
        if spec.k < 2 || spec.dim == 0 {
            return Err(invalid("task", "need k >= 2 classes and dim >= 1"));
        }
        if spec.fine_dims > spec.dim {
            return Err(invalid("fine_dims", format!("{} exceeds dim {}", spec.fine_dims, spec.dim)));
        }
        if !(spec.within_class_sigma >= 0.0) || !(spec.fine_scale > 0.0) {
            return Err(invalid("task", "sigma must be >= 0 and fine_scale > 0"));
        }
        let mut rng = stream(seed, Stream::TaskMeans);
        let class_means = (0..spec.k)
            .map(|_| {
                (0..spec.dim)
                    .map(|d| {
                        let s = if d < spec.fine_dims {
                            spec.separation * spec.fine_separation
                        } else {
                            spec.separation
                        };
                        let z: f64 = StandardNormal.sample(&mut rng);
                        s * z
                    })
                    .collect()
            })
            .collect();
        let scales = (0..spec.dim)
            .map(|d| if d < spec.fine_dims { spec.fine_scale } else { 1.0 })
            .collect();
        Ok(Self {
            k: spec.k,
            dim: spec.dim,
            class_means,
            within_class_sigma: spec.within_class_sigma,
            scales,
            seed,
        })
    }

    /// `n` labeled points with classes balanced within one, in shuffled order.
    pub fn sample(&self, n: usize, rng: &mut Rng) -> Result<Dataset> {
        if n < self.k {
            return Err(invalid("n", format!("need at least {} points, got {n}", self.k)));
        }
        let mut y: Vec<usize> = (0..n).map(|i| i % self.k).collect();
        y.shuffle(rng);
        let x = y
            .iter()
            .map(|&c| {
                self.class_means[c]
                    .iter()
                    .zip(&self.scales)
                    .map(|(m, s)| {
                        let z: f64 = StandardNormal.sample(rng);
                        s * (m + self.within_class_sigma * z)
                    })
                    .collect()
            })
            .collect();
        Ok(Dataset { x, y })
    }

    /// Nearest class mean after undoing the feature scales; Bayes-optimal for
    /// clean points since classes share an isotropic covariance.
    pub fn bayes_predict(&self, x: &[f64]) -> usize {
        let mut best = (0, f64::INFINITY);
        for (c, m) in self.class_means.iter().enumerate() {
            let d: f64 = x
                .iter()
                .zip(m)
                .zip(&self.scales)
                .map(|((v, mu), s)| (v / s - mu).powi(2))
                .sum();
            if d < best.1 {
                best = (c, d);
            }
        }
        best.0
    }

    pub fn bayes_accuracy(&self, data: &Dataset) -> f64 {
        let hits = data.iter().filter(|(x, y)| self.bayes_predict(x) == *y).count();
        hits as f64 / data.len().max(1) as f64
    }
}

/// Additive Gaussian corruption of a random subset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShiftSpec {
    pub noise_sigma: f64,
    pub noise_fraction: f64,
}

impl ShiftSpec {
    pub const NONE: ShiftSpec = ShiftSpec { noise_sigma: 0.0, noise_fraction: 0.0 };
}

/// A corrupted copy plus which rows were touched.
#[derive(Debug, Clone, PartialEq)]
pub struct Shifted {
    pub data: Dataset,
    pub mask: Vec<bool>,
}

/// Adds `N(0, noise_sigma^2)` to every feature of exactly
/// `round(noise_fraction * n)` rows chosen uniformly without replacement.
pub fn apply_shift(data: &Dataset, shift: &ShiftSpec, rng: &mut Rng) -> Result<Shifted> {
    if data.is_empty() {
        return Err(invalid("data", "cannot shift an empty dataset"));
    }
    if !(shift.noise_sigma >= 0.0) || !(0.0..=1.0).contains(&shift.noise_fraction) {
        return Err(invalid("shift", "need noise_sigma >= 0 and noise_fraction in [0, 1]"));
    }
    let n = data.len();
    let count = (shift.noise_fraction * n as f64).round() as usize;
    let mut mask = vec![false; n];
    let mut out = data.clone();
    for i in sample(rng, n, count).into_vec() {
        mask[i] = true;
    }
    for (row, &hit) in out.x.iter_mut().zip(&mask) {
        if hit {
            for v in row.iter_mut() {
                let z: f64 = StandardNormal.sample(rng);
                *v += shift.noise_sigma * z;
            }
        }
    }
    Ok(Shifted { data: out, mask })
}

/// Disjoint train / calibration index sets over a pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train: Vec<usize>,
    pub cal: Vec<usize>,
}

impl SplitPlan {
    /// Shuffles `0..n` and keeps `round(cal_fraction * n)` for calibration.
    pub fn random(n: usize, cal_fraction: f64, rng: &mut Rng) -> Result<Self> {
        if !(cal_fraction > 0.0 && cal_fraction < 1.0) {
            return Err(invalid("cal_fraction", format!("must lie in (0, 1), got {cal_fraction}")));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(rng);
        let n_cal = ((cal_fraction * n as f64).round() as usize).clamp(1, n.saturating_sub(1));
        let train = idx.split_off(n_cal);
        Ok(Self { train, cal: idx })
    }

    /// Errors with the first index found in both sets.
    pub fn check_disjoint(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::with_capacity(self.cal.len());
        seen.extend(self.cal.iter().copied());
        match self.train.iter().find(|i| seen.contains(i)) {
            Some(&i) => Err(Error::CalibrationOverlap(i)),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strength {
    Weak,
    Strong,
}

/// Augmentation noise levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentSpec {
    pub weak_sigma: f64,
    pub strong_sigma: f64,
    pub strong_dropout: f64,
}

impl Default for AugmentSpec {
    fn default() -> Self {
        Self { weak_sigma: 0.05, strong_sigma: 0.3, strong_dropout: 0.2 }
    }
}

/// Weak: `x + N(0, weak_sigma^2)`. Strong: zero `round(strong_dropout * dim)`
/// random features, then add `N(0, strong_sigma^2)`.
pub fn augment(x: &[f64], strength: Strength, spec: &AugmentSpec, rng: &mut Rng) -> Vec<f64> {
    let mut out = x.to_vec();
    let sigma = match strength {
        Strength::Weak => spec.weak_sigma,
        Strength::Strong => {
            let drop = (spec.strong_dropout * x.len() as f64).round() as usize;
            for i in sample(rng, x.len(), drop.min(x.len())).into_vec() {
                out[i] = 0.0;
            }
            spec.strong_sigma
        }
    };
    if sigma > 0.0 {
        for v in &mut out {
            let z: f64 = StandardNormal.sample(rng);
            *v += sigma * z;
        }
    }
    out
}

/// Uniform integer in `0..n`.
pub(crate) fn pick(rng: &mut Rng, n: usize) -> usize {
    rng.random_range(0..n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn task(sigma: f64) -> SyntheticTask {
        let spec = TaskSpec { within_class_sigma: sigma, ..TaskSpec::default() };
        SyntheticTask::generate(&spec, 7).unwrap()
    }

    #[test]
    fn zero_sigma_points_are_means() {
        let t = task(0.0);
        let d = t.sample(50, &mut stream(1, Stream::Data)).unwrap();
        for (x, y) in d.iter() {
            assert_eq!(x, t.class_means[y].as_slice());
        }
        assert_eq!(t.bayes_accuracy(&d), 1.0);
    }

    #[test]
    fn classes_balanced_and_reproducible() {
        let t = task(1.0);
        let a = t.sample(103, &mut stream(2, Stream::Data)).unwrap();
        let b = t.sample(103, &mut stream(2, Stream::Data)).unwrap();
        assert_eq!(a, b);
        let mut counts = vec![0usize; t.k];
        for &y in &a.y {
            counts[y] += 1;
        }
        let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
        assert!(hi - lo <= 1);
        assert!(t.sample(5, &mut stream(2, Stream::Data)).is_err());
    }

    #[test]
    fn shift_edge_cases() {
        let t = task(1.0);
        let d = t.sample(100, &mut stream(3, Stream::Data)).unwrap();
        let none = apply_shift(&d, &ShiftSpec { noise_sigma: 0.5, noise_fraction: 0.0 }, &mut stream(3, Stream::Shift)).unwrap();
        assert_eq!(none.data, d);
        let zero = apply_shift(&d, &ShiftSpec { noise_sigma: 0.0, noise_fraction: 1.0 }, &mut stream(3, Stream::Shift)).unwrap();
        assert_eq!(zero.data, d);
        assert!(zero.mask.iter().all(|&m| m));
        let some = apply_shift(&d, &ShiftSpec { noise_sigma: 0.5, noise_fraction: 0.4 }, &mut stream(3, Stream::Shift)).unwrap();
        assert_eq!(some.mask.iter().filter(|&&m| m).count(), 40);
        for ((a, b), m) in some.data.x.iter().zip(&d.x).zip(&some.mask) {
            assert_eq!(a == b, !m);
        }
    }

    #[test]
    fn split_is_disjoint() {
        let s = SplitPlan::random(1000, 0.1, &mut stream(4, Stream::Split)).unwrap();
        assert_eq!((s.train.len(), s.cal.len()), (900, 100));
        s.check_disjoint().unwrap();
        let bad = SplitPlan { train: vec![1, 2, 3], cal: vec![3, 4] };
        assert_eq!(bad.check_disjoint(), Err(Error::CalibrationOverlap(3)));
    }

    #[test]
    fn augmentation_edges() {
        let x = vec![1.0, -2.0, 3.0, 4.0];
        let quiet = AugmentSpec { weak_sigma: 0.0, ..AugmentSpec::default() };
        let mut rng = stream(5, Stream::Augment);
        assert_eq!(augment(&x, Strength::Weak, &quiet, &mut rng), x);
        let all = AugmentSpec { strong_dropout: 1.0, strong_sigma: 0.0, ..AugmentSpec::default() };
        assert_eq!(augment(&x, Strength::Strong, &all, &mut rng), vec![0.0; 4]);
        let noisy = AugmentSpec { strong_dropout: 1.0, ..AugmentSpec::default() };
        let v = augment(&x, Strength::Strong, &noisy, &mut rng);
        assert!(v.iter().all(|a| a.abs() < 2.0 && *a != 0.0));
    }
}
