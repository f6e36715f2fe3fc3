use crate::error::{Error, Result};
use crate::nn::ops;
use crate::nn::{ActivationRecord, Directive, InterceptSpec, Layer, Network, NeuronId};

/// Reverse-mode gradients of the analyzed response at a recorded point.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientRecord {
    /// ∇_x Φ, input shaped.
    pub input_grad: Vec<f64>,
    /// ∂Φ/∂a for every hidden neuron (with respect to the value passed
    /// downstream). Frozen neurons report 0.
    pub neuron_grads: Vec<Vec<f64>>,
}

impl GradientRecord {
    pub fn neuron_grad(&self, id: NeuronId) -> f64 {
        self.neuron_grads[id.layer][id.unit]
    }
}

/// How gradients cross a ReLU.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReluRule {
    Standard,
    /// Guided backpropagation: negative incoming gradients are also clamped.
    Guided,
}

/// Accumulated parameter gradients, aligned with [`Network::layers`].
#[derive(Debug, Clone)]
pub struct ParamGrads {
    pub layers: Vec<Option<(Vec<f64>, Vec<f64>)>>,
}

impl ParamGrads {
    pub fn zeros(net: &Network) -> Self {
        Self {
            layers: net
                .layers()
                .iter()
                .map(|l| l.params().map(|(w, b)| (vec![0.0; w.len()], vec![0.0; b.len()])))
                .collect(),
        }
    }

    pub fn add(&mut self, other: &ParamGrads) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            if let (Some((aw, ab)), Some((bw, bb))) = (a, b) {
                aw.iter_mut().zip(bw).for_each(|(x, y)| *x += y);
                ab.iter_mut().zip(bb).for_each(|(x, y)| *x += y);
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for (w, b) in self.layers.iter_mut().flatten() {
            w.iter_mut().chain(b.iter_mut()).for_each(|v| *v *= s);
        }
    }
}

fn check(net: &Network, record: &ActivationRecord) -> Result<()> {
    if record.version != net.version() {
        return Err(Error::StaleRecord { record: record.version, current: net.version() });
    }
    Ok(())
}

fn one_hot(len: usize, index: usize) -> Vec<f64> {
    let mut v = vec![0.0; len];
    v[index] = 1.0;
    v
}

/// Gradients of Φ = logit[class_index] at the recorded point.
///
/// `intercept` must be the one the record was produced with.
pub fn backward(net: &Network, record: &ActivationRecord, intercept: Option<&InterceptSpec>) -> Result<GradientRecord> {
    check(net, record)?;
    if record.intercept.as_ref() != intercept {
        return Err(Error::InterceptMismatch);
    }
    let seed = one_hot(net.num_classes(), record.class_index);
    Ok(reverse(net, record, net.layers().len(), seed, ReluRule::Standard, &mut |_, _| {}, None))
}

/// Backward pass from an arbitrary gradient on the logits.
pub fn backward_logits(
    net: &Network,
    record: &ActivationRecord,
    logit_grad: &[f64],
    rule: ReluRule,
) -> Result<GradientRecord> {
    backward_hooked(net, record, logit_grad, rule, &mut |_, _| {})
}

/// Backward pass with a hook that may rewrite ∂Φ/∂a of each hidden layer
/// before it propagates further upstream.
pub fn backward_hooked(
    net: &Network,
    record: &ActivationRecord,
    logit_grad: &[f64],
    rule: ReluRule,
    hook: &mut dyn FnMut(usize, &mut [f64]),
) -> Result<GradientRecord> {
    check(net, record)?;
    if logit_grad.len() != net.num_classes() {
        return Err(Error::InvalidParameter(format!(
            "logit gradient has {} entries, network has {} classes",
            logit_grad.len(),
            net.num_classes()
        )));
    }
    Ok(reverse(net, record, net.layers().len(), logit_grad.to_vec(), rule, hook, None))
}

/// ∇_x z for one hidden pre-activation, under the record's intercept.
pub fn preactivation_input_grad(net: &Network, record: &ActivationRecord, id: NeuronId) -> Result<Vec<f64>> {
    check(net, record)?;
    if !net.contains(id) {
        return Err(Error::NeuronOutOfRange(id));
    }
    let hidden = net.hidden_layers()[id.layer];
    let seed = one_hot(hidden.shape.len(), id.unit);
    Ok(reverse(net, record, hidden.op, seed, ReluRule::Standard, &mut |_, _| {}, None).input_grad)
}

/// Parameter gradients of `logit_grad · logits`, accumulated into `grads`.
pub fn accumulate_param_grads(
    net: &Network,
    record: &ActivationRecord,
    logit_grad: &[f64],
    grads: &mut ParamGrads,
) -> Result<()> {
    check(net, record)?;
    reverse(net, record, net.layers().len(), logit_grad.to_vec(), ReluRule::Standard, &mut |_, _| {}, Some(grads));
    Ok(())
}

/// Core reverse sweep. `grad` is the gradient with respect to `values[start]`.
fn reverse(
    net: &Network,
    record: &ActivationRecord,
    start: usize,
    mut grad: Vec<f64>,
    rule: ReluRule,
    hook: &mut dyn FnMut(usize, &mut [f64]),
    mut params: Option<&mut ParamGrads>,
) -> GradientRecord {
    let hidden = net.hidden_layers();
    let mut neuron_grads: Vec<Vec<f64>> = hidden.iter().map(|h| vec![0.0; h.shape.len()]).collect();
    let mut h = hidden.iter().filter(|hl| hl.op < start).count();
    for k in (0..start).rev() {
        let (in_shape, out_shape) = (net.shape_at(k), net.shape_at(k + 1));
        grad = match &net.layers()[k] {
            Layer::Dense(d) => {
                if let Some(Some((gw, gb))) = params.as_deref_mut().map(|p| &mut p.layers[k]) {
                    ops::dense_param_grad(d, &record.values[k], &grad, gw, gb);
                }
                ops::dense_backward(d, &grad)
            }
            Layer::Conv(c) => {
                if let Some(Some((gw, gb))) = params.as_deref_mut().map(|p| &mut p.layers[k]) {
                    ops::conv_param_grad(c, in_shape, out_shape, &record.values[k], &grad, gw, gb);
                }
                ops::conv_backward(c, in_shape, out_shape, &grad)
            }
            Layer::AvgPool { window } => ops::avgpool_backward(*window, in_shape, out_shape, &grad),
            Layer::Flatten => grad,
            Layer::Relu => {
                h -= 1;
                if rule == ReluRule::Guided {
                    grad.iter_mut().for_each(|g| *g = g.max(0.0));
                }
                hook(h, &mut grad);
                let z = &record.pre_activations[h];
                let directives = record.intercept.as_ref().map(|s| s.layer(h));
                let ng = &mut neuron_grads[h];
                for j in 0..grad.len() {
                    let scale = match directives.map(|d| d[j]) {
                        None | Some(Directive::Pass) => 1.0,
                        Some(Directive::Gate(g)) => g,
                        Some(Directive::Freeze(_)) => {
                            grad[j] = 0.0;
                            0.0
                        }
                    };
                    ng[j] = grad[j];
                    grad[j] = if z[j] > 0.0 { grad[j] * scale } else { 0.0 };
                }
                grad
            }
        };
    }
    GradientRecord { input_grad: grad, neuron_grads }
}
