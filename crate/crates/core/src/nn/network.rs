use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

static NEXT_VERSION: AtomicU64 = AtomicU64::new(1);

fn next_version() -> u64 {
    NEXT_VERSION.fetch_add(1, Ordering::Relaxed)
}

/// Channel-major tensor shape. Flat vectors use `channels = n, height = width = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub const fn new(channels: usize, height: usize, width: usize) -> Self {
        Self { channels, height, width }
    }

    pub const fn flat(len: usize) -> Self {
        Self::new(len, 1, 1)
    }

    pub const fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub const fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub const fn index(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.height + y) * self.width + x
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.channels, self.height, self.width)
    }
}

/// A hidden neuron: ReLU layer index (0-based) and flattened unit index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NeuronId {
    pub layer: usize,
    pub unit: usize,
}

impl NeuronId {
    pub const fn new(layer: usize, unit: usize) -> Self {
        Self { layer, unit }
    }
}

impl fmt::Display for NeuronId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.layer, self.unit)
    }
}

/// Fully connected layer; `weights` is `outputs x inputs`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn new(inputs: usize, outputs: usize, weights: Vec<f64>, bias: Vec<f64>) -> Self {
        Self { inputs, outputs, weights, bias }
    }
}

/// 2-D convolution with zero padding; `weights` is `out x in x kh x kw`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv2d {
    pub fn output_shape(&self, input: Shape) -> Option<Shape> {
        let h = input.height + 2 * self.padding;
        let w = input.width + 2 * self.padding;
        if self.stride == 0 || h < self.kernel_h || w < self.kernel_w {
            return None;
        }
        Some(Shape::new(
            self.out_channels,
            (h - self.kernel_h) / self.stride + 1,
            (w - self.kernel_w) / self.stride + 1,
        ))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Dense(Dense),
    Conv(Conv2d),
    /// Non-overlapping average pooling, window = stride.
    AvgPool { window: usize },
    Flatten,
    Relu,
}

impl Layer {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Dense(_) => "dense",
            Layer::Conv(_) => "conv",
            Layer::AvgPool { .. } => "avgpool",
            Layer::Flatten => "flatten",
            Layer::Relu => "relu",
        }
    }

    pub fn is_parameterized(&self) -> bool {
        matches!(self, Layer::Dense(_) | Layer::Conv(_))
    }

    pub fn params(&self) -> Option<(&[f64], &[f64])> {
        match self {
            Layer::Dense(d) => Some((&d.weights, &d.bias)),
            Layer::Conv(c) => Some((&c.weights, &c.bias)),
            _ => None,
        }
    }

    pub(crate) fn params_mut(&mut self) -> Option<(&mut [f64], &mut [f64])> {
        match self {
            Layer::Dense(d) => Some((&mut d.weights, &mut d.bias)),
            Layer::Conv(c) => Some((&mut c.weights, &mut c.bias)),
            _ => None,
        }
    }

    fn output_shape(&self, input: Shape) -> std::result::Result<Shape, String> {
        match self {
            Layer::Dense(d) => {
                if input.len() != d.inputs {
                    return Err(format!("dense expects {} inputs, previous layer yields {}", d.inputs, input.len()));
                }
                if d.weights.len() != d.inputs * d.outputs {
                    return Err(format!(
                        "dense {}->{} needs {} weights, found {}",
                        d.inputs,
                        d.outputs,
                        d.inputs * d.outputs,
                        d.weights.len()
                    ));
                }
                if d.bias.len() != d.outputs {
                    return Err(format!("dense bias has length {}, expected {}", d.bias.len(), d.outputs));
                }
                Ok(Shape::flat(d.outputs))
            }
            Layer::Conv(c) => {
                if input.channels != c.in_channels {
                    return Err(format!("conv expects {} input channels, found {}", c.in_channels, input.channels));
                }
                let expected = c.out_channels * c.in_channels * c.kernel_h * c.kernel_w;
                if c.weights.len() != expected {
                    return Err(format!("conv kernel needs {} weights, found {}", expected, c.weights.len()));
                }
                if c.bias.len() != c.out_channels {
                    return Err(format!("conv bias has length {}, expected {}", c.bias.len(), c.out_channels));
                }
                c.output_shape(input)
                    .ok_or_else(|| format!("conv kernel {}x{} does not fit input {input}", c.kernel_h, c.kernel_w))
            }
            Layer::AvgPool { window } => {
                if *window == 0 || input.height < *window || input.width < *window {
                    return Err(format!("avgpool window {window} does not fit input {input}"));
                }
                Ok(Shape::new(input.channels, input.height / window, input.width / window))
            }
            Layer::Flatten => Ok(Shape::flat(input.len())),
            Layer::Relu => Ok(input),
        }
    }
}

/// Where a hidden (ReLU) layer sits and what produced it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HiddenLayer {
    /// Index of the `Relu` op in [`Network::layers`].
    pub op: usize,
    pub shape: Shape,
    /// True when the nearest parameterized layer before this ReLU is a convolution.
    pub convolutional: bool,
}

/// A rectified network ending in an affine head, one logit per class.
///
/// Immutable in practice: every mutation bumps [`Network::version`], which
/// invalidates records produced earlier.
#[derive(Debug, Clone)]
pub struct Network {
    input_shape: Shape,
    layers: Vec<Layer>,
    shapes: Vec<Shape>,
    hidden: Vec<HiddenLayer>,
    version: u64,
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.input_shape == other.input_shape && self.layers == other.layers
    }
}

impl Network {
    pub fn new(input_shape: Shape, layers: Vec<Layer>) -> Result<Self> {
        if input_shape.is_empty() {
            return Err(Error::Arch("input shape is empty".into()));
        }
        if !matches!(layers.last(), Some(Layer::Dense(_))) {
            return Err(Error::Arch("the final layer must be a dense head".into()));
        }
        let mut shapes = Vec::with_capacity(layers.len() + 1);
        let mut hidden = Vec::new();
        let mut shape = input_shape;
        let mut last_param_conv = false;
        shapes.push(shape);
        for (i, layer) in layers.iter().enumerate() {
            if let Some((w, b)) = layer.params() {
                if let Some(pos) = w.iter().chain(b).position(|v| !v.is_finite()) {
                    return Err(Error::Shape { layer: i, detail: format!("non-finite parameter at offset {pos}") });
                }
            }
            shape = layer.output_shape(shape).map_err(|detail| Error::Shape { layer: i, detail })?;
            match layer {
                Layer::Dense(_) => last_param_conv = false,
                Layer::Conv(_) => last_param_conv = true,
                Layer::Relu => hidden.push(HiddenLayer { op: i, shape, convolutional: last_param_conv }),
                _ => {}
            }
            shapes.push(shape);
        }
        Ok(Self { input_shape, layers, shapes, hidden, version: next_version() })
    }

    pub fn input_shape(&self) -> Shape {
        self.input_shape
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.len()
    }

    pub fn num_classes(&self) -> usize {
        self.shapes.last().map(Shape::len).unwrap_or(0)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Input shape of op `k`; `shape_at(layers.len())` is the logit shape.
    pub fn shape_at(&self, k: usize) -> Shape {
        self.shapes[k]
    }

    pub fn hidden_layers(&self) -> &[HiddenLayer] {
        &self.hidden
    }

    pub fn num_hidden_layers(&self) -> usize {
        self.hidden.len()
    }

    pub fn hidden_widths(&self) -> Vec<usize> {
        self.hidden.iter().map(|h| h.shape.len()).collect()
    }

    /// Total number of hidden neurons N.
    pub fn num_neurons(&self) -> usize {
        self.hidden.iter().map(|h| h.shape.len()).sum()
    }

    pub fn contains(&self, id: NeuronId) -> bool {
        self.hidden.get(id.layer).is_some_and(|h| id.unit < h.shape.len())
    }

    /// All hidden neurons in (layer, unit) order.
    pub fn neurons(&self) -> impl Iterator<Item = NeuronId> + '_ {
        self.hidden
            .iter()
            .enumerate()
            .flat_map(|(l, h)| (0..h.shape.len()).map(move |u| NeuronId::new(l, u)))
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    /// Indices of dense/conv layers, first to last.
    pub fn parameterized_layers(&self) -> Vec<usize> {
        self.layers.iter().enumerate().filter(|(_, l)| l.is_parameterized()).map(|(i, _)| i).collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().filter_map(Layer::params).map(|(w, b)| w.len() + b.len()).sum()
    }

    /// Mutate the weights and bias of every parameterized layer in place.
    pub fn update_params(&mut self, mut f: impl FnMut(usize, &mut [f64], &mut [f64])) {
        for (i, layer) in self.layers.iter_mut().enumerate() {
            if let Some((w, b)) = layer.params_mut() {
                f(i, w, b);
            }
        }
        self.version = next_version();
    }

    /// Replace the parameters of one layer, keeping its shape.
    pub fn set_layer_params(&mut self, layer: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<()> {
        let Some((w, b)) = self.layers.get_mut(layer).and_then(Layer::params_mut) else {
            return Err(Error::InvalidParameter(format!("layer {layer} has no parameters")));
        };
        if w.len() != weights.len() || b.len() != bias.len() {
            return Err(Error::Shape { layer, detail: "replacement parameters have the wrong size".into() });
        }
        w.copy_from_slice(&weights);
        b.copy_from_slice(&bias);
        self.version = next_version();
        Ok(())
    }

    /// Round every parameter to the nearest `f32`, the manifest storage precision.
    pub fn round_to_f32(&mut self) {
        self.update_params(|_, w, b| {
            for v in w.iter_mut().chain(b.iter_mut()) {
                *v = *v as f32 as f64;
            }
        });
    }

    /// SHA-256 over topology and exact parameter bits, hex encoded.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(format!("{}|", self.input_shape).as_bytes());
        for layer in &self.layers {
            h.update(layer.kind().as_bytes());
            match layer {
                Layer::Dense(d) => h.update(format!("{}:{}", d.inputs, d.outputs).as_bytes()),
                Layer::Conv(c) => h.update(
                    format!(
                        "{}:{}:{}:{}:{}:{}",
                        c.in_channels, c.out_channels, c.kernel_h, c.kernel_w, c.stride, c.padding
                    )
                    .as_bytes(),
                ),
                Layer::AvgPool { window } => h.update(window.to_le_bytes()),
                _ => {}
            }
            if let Some((w, b)) = layer.params() {
                for v in w.iter().chain(b) {
                    h.update(v.to_bits().to_le_bytes());
                }
            }
        }
        hex::encode(h.finalize())
    }
}
