use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attribution::normalize_map;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::eval::{spearman, ssim, Attributor};
use crate::nn::{forward_record, Network};

/// Standard deviation of re-initialized weights (variance 0.01).
pub const RANDOM_WEIGHT_STD: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SanityCheckpoint {
    /// Number of parameterized layers randomized, counted from the output.
    pub randomized: usize,
    /// Index into the network's layer list of the most recently randomized layer.
    pub layer: Option<usize>,
    pub ssim: f64,
    /// Mean over inputs where both maps have a defined rank correlation.
    pub spearman: Option<f64>,
    /// Inputs whose Spearman correlation was undefined (a constant map).
    pub spearman_undefined: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SanityTrace {
    pub method: String,
    pub inputs: usize,
    pub checkpoints: Vec<SanityCheckpoint>,
}

impl SanityTrace {
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "randomized,layer,ssim,spearman,spearman_undefined")?;
        for c in &self.checkpoints {
            let layer = c.layer.map_or(String::new(), |l| l.to_string());
            let rho = c.spearman.map_or("undefined".to_string(), |r| r.to_string());
            writeln!(out, "{},{layer},{},{rho},{}", c.randomized, c.ssim, c.spearman_undefined)?;
        }
        Ok(())
    }
}

/// Replaces one layer's weights with N(0, 0.1²) draws and zeroes its biases.
pub fn randomize_layer(net: &mut Network, layer: usize, seed: u64) -> Result<()> {
    let Some((w, b)) = net.layers().get(layer).and_then(|l| l.params()) else {
        return Err(Error::InvalidParameter(format!("layer {layer} has no parameters")));
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (layer as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let normal = Normal::new(0.0, RANDOM_WEIGHT_STD).expect("valid sigma");
    let weights: Vec<f64> = (0..w.len()).map(|_| normal.sample(&mut rng) as f32 as f64).collect();
    let bias = vec![0.0; b.len()];
    net.set_layer_params(layer, weights, bias)
}

/// Cascading parameter randomization from the last parameterized layer to
/// the first, comparing each input's normalized reduced map with the map of
/// the intact network.
pub fn randomization_sanity(net: &Network, dataset: &Dataset, attributor: &dyn Attributor, seed: u64) -> Result<SanityTrace> {
    if dataset.is_empty() {
        return Err(Error::Dataset("sanity check needs at least one input".into()));
    }
    let classes: Vec<usize> = dataset
        .inputs
        .par_iter()
        .map(|x| forward_record(net, x, None, 0).map(|r| r.predicted_class()))
        .collect::<Result<_>>()?;
    let maps = |model: &Network| -> Result<Vec<Vec<f64>>> {
        dataset
            .inputs
            .par_iter()
            .zip(&classes)
            .map(|(x, &c)| attributor.attribute(model, x, c).map(|m| normalize_map(&m).reduced))
            .collect()
    };
    let original = maps(net)?;
    let (h, w) = (dataset.shape.height, dataset.shape.width);
    let order: Vec<usize> = net.parameterized_layers().into_iter().rev().collect();
    let mut model = net.clone();
    let mut checkpoints = Vec::with_capacity(order.len() + 1);
    for k in 0..=order.len() {
        if k > 0 {
            randomize_layer(&mut model, order[k - 1], seed)?;
        }
        let current = maps(&model)?;
        let scores: Vec<(f64, Option<f64>)> = original
            .par_iter()
            .zip(&current)
            .map(|(a, b)| {
                let s = ssim(a, b, h, w)?;
                match spearman(a, b) {
                    Ok(r) => Ok((s, Some(r))),
                    Err(Error::Undefined(_)) => Ok((s, None)),
                    Err(e) => Err(e),
                }
            })
            .collect::<Result<_>>()?;
        let defined: Vec<f64> = scores.iter().filter_map(|s| s.1).collect();
        checkpoints.push(SanityCheckpoint {
            randomized: k,
            layer: k.checked_sub(1).map(|i| order[i]),
            ssim: scores.iter().map(|s| s.0).sum::<f64>() / scores.len() as f64,
            spearman: (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64),
            spearman_undefined: scores.len() - defined.len(),
        });
    }
    Ok(SanityTrace { method: attributor.name(), inputs: dataset.len(), checkpoints })
}
