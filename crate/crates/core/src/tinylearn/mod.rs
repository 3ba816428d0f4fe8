//! A minimal differentiable model stack: dense networks with hand-written
//! backpropagation, the losses guidance needs, and SGD.

mod checkpoint;
mod loss;
mod net;

pub use checkpoint::{from_json, to_json, Checkpoint};
pub use loss::{backward, kd_divergence, loss, GuideLoss, GuideTarget, LossAndGrad, LossSpec, Sample, DEFAULT_KD_TEMPERATURE};
pub use net::{argmax, log_softmax_t, softmax, softmax_t, Activation, DenseNet, Gradients, Layer, Trace};
