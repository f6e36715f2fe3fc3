use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Conv2d, Dense, Layer, Network, Shape};

/// Weight-free layer description.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerSpec {
    Dense { outputs: usize },
    Conv { out_channels: usize, kernel: usize, stride: usize, padding: usize },
    AvgPool { window: usize },
    Flatten,
    Relu,
}

/// Network topology without parameters, e.g. `conv:4:3,relu,pool:2,flatten,dense:16,relu,dense:10`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub input_shape: Shape,
    pub layers: Vec<LayerSpec>,
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerSpec::Dense { outputs } => write!(f, "dense:{outputs}"),
            LayerSpec::Conv { out_channels, kernel, stride, padding } => {
                write!(f, "conv:{out_channels}:{kernel}:{stride}:{padding}")
            }
            LayerSpec::AvgPool { window } => write!(f, "pool:{window}"),
            LayerSpec::Flatten => f.write_str("flatten"),
            LayerSpec::Relu => f.write_str("relu"),
        }
    }
}

impl FromStr for LayerSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let num = |i: usize| -> Result<usize> {
            parts
                .get(i)
                .ok_or_else(|| Error::Parse(format!("layer `{s}` is missing field {i}")))?
                .parse()
                .map_err(|_| Error::Parse(format!("layer `{s}`: field {i} is not an integer")))
        };
        match parts[0] {
            "dense" => Ok(LayerSpec::Dense { outputs: num(1)? }),
            "conv" => {
                let kernel = num(2)?;
                let stride = if parts.len() > 3 { num(3)? } else { 1 };
                let padding = if parts.len() > 4 { num(4)? } else { kernel / 2 };
                Ok(LayerSpec::Conv { out_channels: num(1)?, kernel, stride, padding })
            }
            "pool" => Ok(LayerSpec::AvgPool { window: num(1)? }),
            "flatten" => Ok(LayerSpec::Flatten),
            "relu" => Ok(LayerSpec::Relu),
            other => Err(Error::Parse(format!("unknown layer kind `{other}`"))),
        }
    }
}

impl ArchSpec {
    pub fn new(input_shape: Shape, layers: Vec<LayerSpec>) -> Self {
        Self { input_shape, layers }
    }

    pub fn parse(input_shape: Shape, layers: &str) -> Result<Self> {
        let layers = layers.split(',').filter(|s| !s.trim().is_empty()).map(str::parse).collect::<Result<_>>()?;
        Ok(Self { input_shape, layers })
    }

    /// Multi-layer perceptron: `hidden` ReLU layers then a head of `classes` logits.
    pub fn mlp(input_shape: Shape, hidden: &[usize], classes: usize) -> Self {
        let mut layers = Vec::new();
        for &h in hidden {
            layers.push(LayerSpec::Dense { outputs: h });
            layers.push(LayerSpec::Relu);
        }
        layers.push(LayerSpec::Dense { outputs: classes });
        Self { input_shape, layers }
    }

    /// Kaiming-uniform weights (bound √(6/fan_in)) and uniform biases
    /// (bound 1/√fan_in), rounded to `f32` so manifests round-trip exactly.
    pub fn build_random<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Network> {
        let mut shape = self.input_shape;
        let mut layers = Vec::with_capacity(self.layers.len());
        for (i, spec) in self.layers.iter().enumerate() {
            let layer = match *spec {
                LayerSpec::Dense { outputs } => {
                    let inputs = shape.len();
                    let (weights, bias) = init(rng, inputs, inputs * outputs, outputs);
                    Layer::Dense(Dense::new(inputs, outputs, weights, bias))
                }
                LayerSpec::Conv { out_channels, kernel, stride, padding } => {
                    let fan_in = shape.channels * kernel * kernel;
                    let (weights, bias) = init(rng, fan_in, out_channels * fan_in, out_channels);
                    Layer::Conv(Conv2d {
                        in_channels: shape.channels,
                        out_channels,
                        kernel_h: kernel,
                        kernel_w: kernel,
                        stride,
                        padding,
                        weights,
                        bias,
                    })
                }
                LayerSpec::AvgPool { window } => Layer::AvgPool { window },
                LayerSpec::Flatten => Layer::Flatten,
                LayerSpec::Relu => Layer::Relu,
            };
            shape = match &layer {
                Layer::Dense(d) => Shape::flat(d.outputs),
                Layer::Conv(c) => c
                    .output_shape(shape)
                    .ok_or_else(|| Error::Shape { layer: i, detail: format!("conv does not fit input {shape}") })?,
                Layer::AvgPool { window } if *window > 0 => {
                    Shape::new(shape.channels, shape.height / window, shape.width / window)
                }
                Layer::Flatten => Shape::flat(shape.len()),
                _ => shape,
            };
            layers.push(layer);
        }
        Network::new(self.input_shape, layers)
    }

    pub fn layers_string(&self) -> String {
        self.layers.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
    }
}

fn init<R: Rng + ?Sized>(rng: &mut R, fan_in: usize, n_weights: usize, n_bias: usize) -> (Vec<f64>, Vec<f64>) {
    let wb = (6.0 / fan_in as f64).sqrt();
    let bb = 1.0 / (fan_in as f64).sqrt();
    let weights = (0..n_weights).map(|_| rng.random_range(-wb..wb) as f32 as f64).collect();
    let bias = (0..n_bias).map(|_| rng.random_range(-bb..bb) as f32 as f64).collect();
    (weights, bias)
}
