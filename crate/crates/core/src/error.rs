use thiserror::Error;

use crate::nn::NeuronId;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch at layer {layer}: {detail}")]
    Shape { layer: usize, detail: String },

    #[error("input has {got} elements, network expects {expected}")]
    InputSize { expected: usize, got: usize },

    #[error("input contains a non-finite value at index {index}")]
    NonFiniteInput { index: usize },

    #[error("class index {index} out of range for {classes} classes")]
    ClassIndex { index: usize, classes: usize },

    #[error("activation record is stale: produced by network version {record}, network is at {current}")]
    StaleRecord { record: u64, current: u64 },

    #[error("intercept does not match the one used to produce the record")]
    InterceptMismatch,

    #[error("invalid intercept for neuron {neuron}: {detail}")]
    Intercept { neuron: NeuronId, detail: String },

    #[error("neuron {0} is outside the network")]
    NeuronOutOfRange(NeuronId),

    #[error("manifest error at `{path}`: {detail}")]
    Manifest { path: String, detail: String },

    #[error("invalid architecture: {0}")]
    Arch(String),

    #[error("IDX format error: {0}")]
    Idx(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("training diverged at epoch {epoch}, batch {batch} (loss = {loss})")]
    Diverged { epoch: usize, batch: usize, loss: f64 },

    #[error("optimization produced a non-finite objective at iteration {iteration}")]
    NonFiniteObjective { iteration: usize },

    #[error("layer {layer} has {width} neurons, brute-force Shapley supports at most {max}")]
    LayerTooWide { layer: usize, width: usize, max: usize },

    #[error("all contributions are zero; no pathway with a positive threshold exists")]
    AllZeroContributions,

    #[error("pathway is empty")]
    EmptyPathway,

    #[error("mask shape does not match the network: {0}")]
    MaskShape(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("network has no convolutional layer to target")]
    NoConvLayer,

    #[error("linear region is degenerate: neuron {neuron} sits on its own hyperplane (z = 0)")]
    BoundaryPoint { neuron: NeuronId },

    #[error("metric undefined: {0}")]
    Undefined(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
