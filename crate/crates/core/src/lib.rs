//! Critical neuron pathways in rectified networks.
//!
//! Neuron contributions (Taylor and integrated-gradient estimates of the
//! Shapley value) select sparse pathways; freezing everything outside a
//! pathway yields a locally linear surrogate whose input gradient is used as
//! an attribution map. The crate also contains the pruning-objective
//! selectors used as counterexamples and a harness for evaluating
//! attributions (input degradation, remove-and-retrain, parameter
//! randomization).

pub mod error;
pub mod nn;
pub mod data;
pub mod train;
pub mod contrib;
pub mod pathway;
pub mod pruneobj;
pub mod linearity;
pub mod attribution;
pub mod eval;

pub use error::{Error, Result};
pub use nn::{ActivationRecord, GradientRecord, InterceptSpec, Network, NeuronId, Shape};
