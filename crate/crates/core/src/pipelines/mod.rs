//! Supervised distillation and semi-supervised loops on a synthetic task.
//!
//! Both loops weigh their guidance per sample with conformal set sizes:
//! the teacher's sets for distillation, the model's own sets for pseudo-labels.

mod data;
mod kd;
mod ssl;
mod train;

pub use data::{
    apply_shift, augment, AugmentSpec, Dataset, ShiftSpec, Shifted, SplitPlan, Strength, SyntheticTask, TaskSpec,
};
pub use kd::{
    guide_weights, prepare_kd, run_kd, run_kd_with_teacher, train_teacher, GuideWeights, KdConfig, KdData, KdMethod,
    KdRun, TeacherSource,
};
pub use ssl::{
    calibrate_labeled, prepare_ssl, pseudo_label, run_ssl, run_ssl_on, view_accuracy, PseudoLabel, SslConfig, SslData,
    SslGuide, SslMethod, SslRun,
};
pub use train::{fit_epoch, fit_supervised, logits_of, masked_accuracy, TrainSpec};
