//! Rectified network representation with recording forward passes and
//! reverse-mode gradients that honour per-neuron intercepts.

mod arch;
mod backward;
mod forward;
mod intercept;
pub mod manifest;
mod network;
mod ops;

pub use arch::{ArchSpec, LayerSpec};
pub use backward::{
    accumulate_param_grads, backward, backward_hooked, backward_logits, preactivation_input_grad, GradientRecord,
    ParamGrads, ReluRule,
};
pub use forward::{forward_record, response, ActivationRecord};
pub(crate) use forward::argmax;
pub use intercept::{Directive, InterceptSpec};
pub use network::{Conv2d, Dense, HiddenLayer, Layer, Network, NeuronId, Shape};
