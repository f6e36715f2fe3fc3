use crate::error::{Error, Result};
use crate::nn::ops;
use crate::nn::{InterceptSpec, Layer, Network, NeuronId};

/// Everything a forward pass produced for one input.
#[derive(Debug, Clone)]
pub struct ActivationRecord {
    pub input: Vec<f64>,
    /// z^i for every hidden layer.
    pub pre_activations: Vec<Vec<f64>>,
    /// a^i = max(z^i, 0), before any intercept directive.
    pub activations: Vec<Vec<f64>>,
    pub logits: Vec<f64>,
    /// The analyzed response: `logits[class_index]`.
    pub output: f64,
    pub class_index: usize,
    /// Output of every op; `values[0]` is the input.
    pub(crate) values: Vec<Vec<f64>>,
    pub(crate) intercept: Option<InterceptSpec>,
    pub(crate) version: u64,
}

impl ActivationRecord {
    pub fn activation(&self, id: NeuronId) -> f64 {
        self.activations[id.layer][id.unit]
    }

    pub fn pre_activation(&self, id: NeuronId) -> f64 {
        self.pre_activations[id.layer][id.unit]
    }

    pub fn is_active(&self, id: NeuronId) -> bool {
        self.activation(id) > 0.0
    }

    /// Values actually passed downstream from hidden layer `layer` (after directives).
    pub fn effective(&self, net: &Network, layer: usize) -> &[f64] {
        &self.values[net.hidden_layers()[layer].op + 1]
    }

    pub fn intercept(&self) -> Option<&InterceptSpec> {
        self.intercept.as_ref()
    }

    pub fn network_version(&self) -> u64 {
        self.version
    }

    pub fn num_neurons(&self) -> usize {
        self.activations.iter().map(Vec::len).sum()
    }

    pub fn dead_count(&self) -> usize {
        self.activations.iter().flatten().filter(|&&a| a <= 0.0).count()
    }

    /// Index of the largest logit (first on ties).
    pub fn predicted_class(&self) -> usize {
        argmax(&self.logits)
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Forward pass recording z and a for every hidden layer.
pub fn forward_record(
    net: &Network,
    x: &[f64],
    intercept: Option<&InterceptSpec>,
    class_index: usize,
) -> Result<ActivationRecord> {
    if x.len() != net.input_len() {
        return Err(Error::InputSize { expected: net.input_len(), got: x.len() });
    }
    if let Some(index) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput { index });
    }
    if class_index >= net.num_classes() {
        return Err(Error::ClassIndex { index: class_index, classes: net.num_classes() });
    }
    if let Some(spec) = intercept {
        spec.validate(net)?;
    }

    let layers = net.layers();
    let mut values: Vec<Vec<f64>> = Vec::with_capacity(layers.len() + 1);
    values.push(x.to_vec());
    let mut pre_activations = Vec::with_capacity(net.num_hidden_layers());
    let mut activations = Vec::with_capacity(net.num_hidden_layers());
    for (k, layer) in layers.iter().enumerate() {
        let input = &values[k];
        let (in_shape, out_shape) = (net.shape_at(k), net.shape_at(k + 1));
        let out = match layer {
            Layer::Dense(d) => ops::dense_forward(d, input),
            Layer::Conv(c) => ops::conv_forward(c, in_shape, out_shape, input),
            Layer::AvgPool { window } => ops::avgpool_forward(*window, in_shape, out_shape, input),
            Layer::Flatten => input.clone(),
            Layer::Relu => {
                let hidden = activations.len();
                let z = input.clone();
                let a: Vec<f64> = z.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
                let eff = match intercept {
                    Some(spec) => a.iter().zip(spec.layer(hidden)).map(|(&v, d)| d.apply(v)).collect(),
                    None => a.clone(),
                };
                pre_activations.push(z);
                activations.push(a);
                eff
            }
        };
        values.push(out);
    }
    let logits = values.last().cloned().unwrap_or_default();
    Ok(ActivationRecord {
        input: x.to_vec(),
        pre_activations,
        activations,
        output: logits[class_index],
        logits,
        class_index,
        values,
        intercept: intercept.cloned(),
        version: net.version(),
    })
}

/// Scalar response Φ(x) for a class, optionally under an intercept.
pub fn response(net: &Network, x: &[f64], intercept: Option<&InterceptSpec>, class_index: usize) -> Result<f64> {
    forward_record(net, x, intercept, class_index).map(|r| r.output)
}
