use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::data::{apply_shift, Dataset, ShiftSpec, SplitPlan, SyntheticTask, TaskSpec};
use super::train::{fit_epoch, fit_supervised, logits_of, masked_accuracy, TrainSpec};
use crate::conformal::{ConformalCalibrator, NonconformityRule};
use crate::error::{invalid, Result};
use crate::record::RunRecord;
use crate::rng::{stream, Stream};
use crate::tinylearn::{softmax, DenseNet, GuideLoss, GuideTarget, LossSpec, Sample};
use crate::weighting::{heuristic_uncertainty, uncertainty, weight, HeuristicKind, UncertaintyMapping, WeightRule};

const TEACHER_INIT: Stream = Stream::Custom(1);
const TEACHER_BATCHES: Stream = Stream::Custom(2);
const TARGET_DATA: Stream = Stream::Custom(3);

/// How the student weighs the teacher.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KdMethod {
    /// No guidance term.
    Scratch,
    /// `w = 1` everywhere.
    PlainKd,
    /// `w = exp(-gamma * u)` with `u` from the teacher's conformal set size.
    AdaConG,
    /// `w = exp(-gamma * u)` with normalized teacher entropy as `u`.
    Entropy,
    /// `w = exp(-gamma * u)` with `u = 1 - max p`.
    Msp,
    /// `w = 1` iff the conformal set is a singleton.
    Hard,
}

impl KdMethod {
    pub const ALL: [KdMethod; 6] = [
        KdMethod::Scratch,
        KdMethod::PlainKd,
        KdMethod::AdaConG,
        KdMethod::Entropy,
        KdMethod::Msp,
        KdMethod::Hard,
    ];

    pub fn name(self) -> &'static str {
        match self {
            KdMethod::Scratch => "scratch",
            KdMethod::PlainKd => "plain_kd",
            KdMethod::AdaConG => "adacong",
            KdMethod::Entropy => "entropy",
            KdMethod::Msp => "msp",
            KdMethod::Hard => "hard",
        }
    }
}

impl fmt::Display for KdMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KdMethod {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        KdMethod::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown kd method `{s}`"))
    }
}

/// Where the teacher learns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TeacherSource {
    /// A large clean source sample, with `KdConfig::teacher` settings.
    CleanSource,
    /// The student's own training split, with the student's settings.
    Matched,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KdConfig {
    pub task: TaskSpec,
    pub source_n: usize,
    /// Student pool, split into train and calibration.
    pub target_n: usize,
    pub test_n: usize,
    /// Applied to the student pool and the test set.
    pub shift: ShiftSpec,
    pub cal_fraction: f64,
    pub teacher_source: TeacherSource,
    pub teacher: TrainSpec,
    pub student: TrainSpec,
    pub alpha: f64,
    pub gamma: f64,
    pub temperature: f64,
    pub lambda_task: f64,
    pub lambda_guide: f64,
    /// Replaces every computed guide weight.
    pub force_weight: Option<f64>,
}

impl Default for KdConfig {
    fn default() -> Self {
        Self {
            task: TaskSpec::default(),
            source_n: 5000,
            target_n: 1000,
            test_n: 2000,
            shift: ShiftSpec { noise_sigma: 0.5, noise_fraction: 0.4 },
            cal_fraction: 0.1,
            teacher_source: TeacherSource::CleanSource,
            teacher: TrainSpec::default(),
            student: TrainSpec::default(),
            alpha: 0.1,
            gamma: 10.0,
            temperature: 4.0,
            lambda_task: 1.0,
            lambda_guide: 1.0,
            force_weight: None,
        }
    }
}

impl KdConfig {
    /// Teacher leans on low-variance features that the shift destroys, so it is
    /// accurate on clean points and confidently wrong on shifted ones.
    pub fn noisy_teacher() -> Self {
        let base = Self::default();
        Self {
            task: TaskSpec { separation: 0.6, fine_dims: 8, fine_scale: 0.02, fine_separation: 8.0, ..TaskSpec::default() },
            target_n: 3000,
            teacher: TrainSpec { epochs: 80, ..base.teacher.clone() },
            student: TrainSpec { epochs: 40, learning_rate: 0.02, ..base.student.clone() },
            ..base
        }
    }

    /// No shift and a teacher trained on the student's own split.
    pub fn control() -> Self {
        Self { shift: ShiftSpec::NONE, teacher_source: TeacherSource::Matched, ..Self::noisy_teacher() }
    }

    pub fn validate(&self) -> Result<()> {
        self.teacher.validate()?;
        self.student.validate()?;
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(crate::Error::InvalidAlpha(self.alpha));
        }
        if !(self.gamma > 0.0) || !(self.temperature > 0.0) {
            return Err(invalid("kd", "gamma and temperature must be > 0"));
        }
        if let Some(w) = self.force_weight {
            if !(0.0..=1.0).contains(&w) {
                return Err(invalid("force_weight", format!("must lie in [0, 1], got {w}")));
            }
        }
        Ok(())
    }

    fn loss_spec(&self, method: KdMethod) -> LossSpec {
        let lambda_guide = if method == KdMethod::Scratch { 0.0 } else { self.lambda_guide };
        LossSpec::with_guide(GuideLoss::KlDivergence { temperature: self.temperature }, self.lambda_task, lambda_guide)
    }
}

/// Every dataset of one seeded KD experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct KdData {
    pub task: SyntheticTask,
    pub source: Dataset,
    /// Student pool after the shift.
    pub pool: Dataset,
    pub pool_mask: Vec<bool>,
    pub test: Dataset,
    pub test_mask: Vec<bool>,
    pub split: SplitPlan,
}

impl KdData {
    pub fn train(&self) -> Dataset {
        self.pool.subset(&self.split.train)
    }

    pub fn cal(&self) -> Dataset {
        self.pool.subset(&self.split.cal)
    }
}

pub fn prepare_kd(cfg: &KdConfig, seed: u64) -> Result<KdData> {
    cfg.validate()?;
    let task = SyntheticTask::generate(&cfg.task, seed)?;
    let source = task.sample(cfg.source_n, &mut stream(seed, Stream::Data))?;
    let mut rng = stream(seed, TARGET_DATA);
    let clean_pool = task.sample(cfg.target_n, &mut rng)?;
    let clean_test = task.sample(cfg.test_n, &mut rng)?;
    let mut shift_rng = stream(seed, Stream::Shift);
    let pool = apply_shift(&clean_pool, &cfg.shift, &mut shift_rng)?;
    let test = apply_shift(&clean_test, &cfg.shift, &mut shift_rng)?;
    let split = SplitPlan::random(cfg.target_n, cfg.cal_fraction, &mut stream(seed, Stream::Split))?;
    Ok(KdData {
        task,
        source,
        pool: pool.data,
        pool_mask: pool.mask,
        test: test.data,
        test_mask: test.mask,
        split,
    })
}

/// Trains and freezes the teacher.
pub fn train_teacher(cfg: &KdConfig, data: &KdData, seed: u64) -> Result<DenseNet> {
    let (spec, train) = match cfg.teacher_source {
        TeacherSource::CleanSource => (&cfg.teacher, data.source.clone()),
        TeacherSource::Matched => (&cfg.student, data.train()),
    };
    let mut net = spec.build(cfg.task.dim, cfg.task.k, &mut stream(seed, TEACHER_INIT))?;
    fit_supervised(&mut net, &train, spec, &mut stream(seed, TEACHER_BATCHES))?;
    Ok(net)
}

/// Per-sample guide weights and set sizes on the student's training split.
#[derive(Debug, Clone, PartialEq)]
pub struct GuideWeights {
    pub calibrator: ConformalCalibrator,
    pub set_sizes: Vec<usize>,
    pub weights: Vec<f64>,
}

/// Calibrates the teacher on `cal` and weighs every row of `train`.
pub fn guide_weights(cfg: &KdConfig, method: KdMethod, teacher: &DenseNet, train: &Dataset, cal: &Dataset) -> Result<GuideWeights> {
    let cal_probs: Vec<Vec<f64>> = logits_of(teacher, cal)?.iter().map(|z| softmax(z)).collect();
    let calibrator = ConformalCalibrator::fit(
        NonconformityRule::Confidence,
        cal_probs.iter().map(Vec::as_slice).zip(cal.y.iter().copied()),
        cfg.alpha,
    )?;
    let mapping = UncertaintyMapping::NormalizedSetSize { universe: cfg.task.k };
    let decay = WeightRule::ExpDecay { gamma: cfg.gamma };
    let mut set_sizes = Vec::with_capacity(train.len());
    let mut weights = Vec::with_capacity(train.len());
    for x in &train.x {
        let probs = softmax(&teacher.forward(x)?);
        let size = calibrator.prediction_set(&probs)?.len();
        let u = uncertainty(mapping, size)?;
        let w = match method {
            KdMethod::Scratch | KdMethod::PlainKd => 1.0,
            KdMethod::AdaConG => weight(decay, u, None)?,
            KdMethod::Hard => weight(WeightRule::HardZero, u, None)?,
            KdMethod::Entropy => weight(decay, heuristic_uncertainty(HeuristicKind::Entropy, &probs)?, None)?,
            KdMethod::Msp => weight(decay, heuristic_uncertainty(HeuristicKind::Msp, &probs)?, None)?,
        };
        set_sizes.push(size);
        weights.push(cfg.force_weight.unwrap_or(w));
    }
    Ok(GuideWeights { calibrator, set_sizes, weights })
}

/// Outcome of one student run.
#[derive(Debug, Clone)]
pub struct KdRun {
    pub method: KdMethod,
    pub seed: u64,
    pub record: RunRecord,
    pub student: DenseNet,
    pub student_accuracy: f64,
    pub teacher_accuracy: f64,
    pub split: SplitPlan,
}

/// Full experiment: data, teacher, then the student.
pub fn run_kd(cfg: &KdConfig, method: KdMethod, seed: u64) -> Result<KdRun> {
    let data = prepare_kd(cfg, seed)?;
    let teacher = train_teacher(cfg, &data, seed)?;
    run_kd_with_teacher(cfg, method, seed, &data, &teacher)
}

/// Trains a student against a frozen teacher. The split must be disjoint.
pub fn run_kd_with_teacher(cfg: &KdConfig, method: KdMethod, seed: u64, data: &KdData, teacher: &DenseNet) -> Result<KdRun> {
    cfg.validate()?;
    data.split.check_disjoint()?;
    let train = data.train();
    let cal = data.cal();
    let guide = guide_weights(cfg, method, teacher, &train, &cal)?;
    let teacher_logits = logits_of(teacher, &train)?;
    let teacher_accuracy = teacher.accuracy(data.test.iter())?;

    let mut record = RunRecord::new(format!("kd-{}-s{seed}", method.name()), seed);
    record.push(0, "teacher/test_accuracy", teacher_accuracy);
    record.push(0, "teacher/quantile", guide.calibrator.quantile.value);
    let mean_size = guide.set_sizes.iter().sum::<usize>() as f64 / guide.set_sizes.len().max(1) as f64;
    let mean_weight = guide.weights.iter().sum::<f64>() / guide.weights.len().max(1) as f64;

    let samples: Vec<Sample<'_>> = train
        .iter()
        .zip(&teacher_logits)
        .zip(&guide.weights)
        .map(|(((x, y), t), &w)| Sample { x, label: Some(y), guide: Some(GuideTarget::Logits(t)), weight: w })
        .collect();
    let spec = cfg.loss_spec(method);
    let mut student = cfg.student.build(cfg.task.dim, cfg.task.k, &mut stream(seed, Stream::Init))?;
    let mut rng = stream(seed, Stream::Batches);
    let mut test_acc = 0.0;
    for epoch in 1..=cfg.student.epochs {
        fit_epoch(&mut student, &samples, &spec, &cfg.student, &mut rng)?;
        let step = epoch as u64;
        test_acc = student.accuracy(data.test.iter())?;
        record.push(step, "train/accuracy", student.accuracy(train.iter())?);
        record.push(step, "test/accuracy", test_acc);
        record.push(step, "guide/mean_set_size", mean_size);
        record.push(step, "guide/mean_weight", mean_weight);
    }
    record.push(cfg.student.epochs as u64, "test/accuracy_clean", masked_accuracy(&student, &data.test, &data.test_mask, false)?);
    record.push(cfg.student.epochs as u64, "test/accuracy_shifted", masked_accuracy(&student, &data.test, &data.test_mask, true)?);
    Ok(KdRun {
        method,
        seed,
        record,
        student,
        student_accuracy: test_acc,
        teacher_accuracy,
        split: data.split.clone(),
    })
}
