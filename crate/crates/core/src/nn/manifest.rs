//! Model manifest: a JSON document with a topology section and parameter
//! blobs stored as base64 little-endian `f32`, row-major.
//!
//! ```json
//! {
//!   "format": "pathgrad-model",
//!   "format_version": 1,
//!   "input_shape": [1, 1, 1],
//!   "layers": [
//!     { "type": "dense", "inputs": 1, "outputs": 1, "weights": "AACAPw==", "bias": "AAAAAA==" },
//!     { "type": "relu" },
//!     { "type": "dense", "inputs": 1, "outputs": 1, "weights": "AACAPw==", "bias": "AAAAAA==" }
//!   ]
//! }
//! ```
//!
//! Parameters are widened exactly from `f32` on load. Saving a network whose
//! parameters are not `f32`-representable rounds them.

use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::nn::{Conv2d, Dense, Layer, Network, Shape};

pub const FORMAT_NAME: &str = "pathgrad-model";
pub const FORMAT_VERSION: u64 = 1;

#[derive(Serialize)]
struct ManifestOut {
    format: &'static str,
    format_version: u64,
    input_shape: [usize; 3],
    layers: Vec<LayerOut>,
}

#[derive(Serialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum LayerOut {
    Dense {
        inputs: usize,
        outputs: usize,
        weights: String,
        bias: String,
    },
    Conv {
        in_channels: usize,
        out_channels: usize,
        kernel: [usize; 2],
        stride: usize,
        padding: usize,
        weights: String,
        bias: String,
    },
    Avgpool {
        window: usize,
    },
    Flatten,
    Relu,
}

fn encode(values: &[f64]) -> String {
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for &v in values {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    B64.encode(bytes)
}

/// Serialize to the manifest text. Output bytes depend only on the network.
pub fn to_manifest(net: &Network) -> String {
    let s = net.input_shape();
    let layers = net
        .layers()
        .iter()
        .map(|l| match l {
            Layer::Dense(d) => LayerOut::Dense {
                inputs: d.inputs,
                outputs: d.outputs,
                weights: encode(&d.weights),
                bias: encode(&d.bias),
            },
            Layer::Conv(c) => LayerOut::Conv {
                in_channels: c.in_channels,
                out_channels: c.out_channels,
                kernel: [c.kernel_h, c.kernel_w],
                stride: c.stride,
                padding: c.padding,
                weights: encode(&c.weights),
                bias: encode(&c.bias),
            },
            Layer::AvgPool { window } => LayerOut::Avgpool { window: *window },
            Layer::Flatten => LayerOut::Flatten,
            Layer::Relu => LayerOut::Relu,
        })
        .collect();
    let doc = ManifestOut {
        format: FORMAT_NAME,
        format_version: FORMAT_VERSION,
        input_shape: [s.channels, s.height, s.width],
        layers,
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("manifest serialization is infallible");
    text.push('\n');
    text
}

pub fn save(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_manifest(net))?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Network> {
    from_manifest(&std::fs::read_to_string(path)?)
}

fn err(path: impl Into<String>, detail: impl Into<String>) -> Error {
    Error::Manifest { path: path.into(), detail: detail.into() }
}

fn field<'a>(obj: &'a Value, path: &str, key: &str) -> Result<&'a Value> {
    obj.get(key).ok_or_else(|| err(format!("{path}.{key}"), "missing field"))
}

fn usize_field(obj: &Value, path: &str, key: &str) -> Result<usize> {
    field(obj, path, key)?
        .as_u64()
        .map(|v| v as usize)
        .ok_or_else(|| err(format!("{path}.{key}"), "expected a non-negative integer"))
}

fn blob(obj: &Value, path: &str, key: &str, expected: usize) -> Result<Vec<f64>> {
    let p = format!("{path}.{key}");
    let text = field(obj, path, key)?.as_str().ok_or_else(|| err(&p, "expected a base64 string"))?;
    let bytes = B64.decode(text).map_err(|e| err(&p, format!("corrupt weight block: {e}")))?;
    if bytes.len() % 4 != 0 {
        return Err(err(&p, format!("corrupt weight block: {} bytes is not a whole number of f32", bytes.len())));
    }
    let values: Vec<f64> =
        bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect();
    if values.len() != expected {
        return Err(err(&p, format!("expected {expected} values, found {}", values.len())));
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(err(&p, format!("non-finite value at index {i}")));
    }
    Ok(values)
}

pub fn from_manifest(text: &str) -> Result<Network> {
    let doc: Value = serde_json::from_str(text).map_err(|e| err("$", format!("malformed JSON: {e}")))?;
    let version = field(&doc, "$", "format_version")?
        .as_u64()
        .ok_or_else(|| err("$.format_version", "expected an integer"))?;
    if version != FORMAT_VERSION {
        return Err(err("$.format_version", format!("unsupported version {version}, expected {FORMAT_VERSION}")));
    }
    if let Some(name) = doc.get("format") {
        if name.as_str() != Some(FORMAT_NAME) {
            return Err(err("$.format", format!("expected \"{FORMAT_NAME}\"")));
        }
    }
    let dims: Vec<usize> = field(&doc, "$", "input_shape")?
        .as_array()
        .map(|a| a.iter().filter_map(Value::as_u64).map(|v| v as usize).collect())
        .unwrap_or_default();
    if dims.len() != 3 {
        return Err(err("$.input_shape", "expected [channels, height, width]"));
    }
    let input_shape = Shape::new(dims[0], dims[1], dims[2]);
    let entries = field(&doc, "$", "layers")?.as_array().ok_or_else(|| err("$.layers", "expected an array"))?;
    let mut layers = Vec::with_capacity(entries.len());
    for (i, obj) in entries.iter().enumerate() {
        let path = format!("$.layers[{i}]");
        let kind = field(obj, &path, "type")?.as_str().ok_or_else(|| err(format!("{path}.type"), "expected a string"))?;
        let layer = match kind {
            "dense" => {
                let inputs = usize_field(obj, &path, "inputs")?;
                let outputs = usize_field(obj, &path, "outputs")?;
                let weights = blob(obj, &path, "weights", inputs * outputs)?;
                let bias = blob(obj, &path, "bias", outputs)?;
                Layer::Dense(Dense::new(inputs, outputs, weights, bias))
            }
            "conv" => {
                let in_channels = usize_field(obj, &path, "in_channels")?;
                let out_channels = usize_field(obj, &path, "out_channels")?;
                let kernel: Vec<usize> = field(obj, &path, "kernel")?
                    .as_array()
                    .map(|a| a.iter().filter_map(Value::as_u64).map(|v| v as usize).collect())
                    .unwrap_or_default();
                if kernel.len() != 2 {
                    return Err(err(format!("{path}.kernel"), "expected [height, width]"));
                }
                let weights = blob(obj, &path, "weights", out_channels * in_channels * kernel[0] * kernel[1])?;
                let bias = blob(obj, &path, "bias", out_channels)?;
                Layer::Conv(Conv2d {
                    in_channels,
                    out_channels,
                    kernel_h: kernel[0],
                    kernel_w: kernel[1],
                    stride: usize_field(obj, &path, "stride")?,
                    padding: usize_field(obj, &path, "padding")?,
                    weights,
                    bias,
                })
            }
            "avgpool" => Layer::AvgPool { window: usize_field(obj, &path, "window")? },
            "flatten" => Layer::Flatten,
            "relu" => Layer::Relu,
            "maxpool" => return Err(err(format!("{path}.type"), "max-pooling is not supported")),
            other => return Err(err(format!("{path}.type"), format!("unknown layer type `{other}`"))),
        };
        layers.push(layer);
    }
    Network::new(input_shape, layers).map_err(|e| match e {
        Error::Shape { layer, detail } => err(format!("$.layers[{layer}]"), detail),
        Error::Arch(detail) => err("$.layers", detail),
        other => other,
    })
}
