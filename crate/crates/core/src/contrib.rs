//! Per-neuron contribution scores.
//!
//! Scores are taken with respect to Φ = logit[class_index]. The Taylor score
//! is |a · ∂Φ/∂a|; the integrated variant averages ∂Φ/∂a along the path
//! α·a, α ∈ (0, 1], with the midpoint rule. Exact zero-ablation and
//! brute-force Shapley values are provided as oracles.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{backward, forward_record, response, Directive, InterceptSpec, Network, NeuronId};

pub const DEFAULT_INTGRAD_STEPS: usize = 50;
pub const MAX_SHAPLEY_WIDTH: usize = 20;

const BLOB_MAGIC: &[u8; 4] = b"PGCM";
const BLOB_VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContributionMethod {
    NeuronMct,
    NeuronIntGrad,
}

impl ContributionMethod {
    pub fn name(self) -> &'static str {
        match self {
            ContributionMethod::NeuronMct => "neuronmct",
            ContributionMethod::NeuronIntGrad => "neuronintgrad",
        }
    }
}

impl std::str::FromStr for ContributionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "neuronmct" | "mct" => Ok(ContributionMethod::NeuronMct),
            "neuronintgrad" | "intgrad" => Ok(ContributionMethod::NeuronIntGrad),
            _ => Err(Error::Parse(format!("unknown contribution method `{s}`"))),
        }
    }
}

/// Path along which the integrated score scales activations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntGradPath {
    /// Scale a whole hidden layer jointly; one backward pass yields every
    /// neuron's integrand for that layer.
    #[default]
    PerLayer,
    /// Scale one neuron at a time.
    PerNeuron,
}

/// Contribution of every hidden neuron.
#[derive(Debug, Clone, PartialEq)]
pub struct ContributionMap {
    pub method: ContributionMethod,
    /// Step count for the integrated score.
    pub steps: Option<usize>,
    pub class_index: usize,
    /// |c| per hidden layer; used for ranking.
    pub values: Vec<Vec<f64>>,
    /// The score before taking the absolute value.
    pub signed: Vec<Vec<f64>>,
}

impl ContributionMap {
    pub fn get(&self, id: NeuronId) -> f64 {
        self.values[id.layer][id.unit]
    }

    pub fn signed_value(&self, id: NeuronId) -> f64 {
        self.signed[id.layer][id.unit]
    }

    pub fn widths(&self) -> Vec<usize> {
        self.values.iter().map(Vec::len).collect()
    }

    pub fn num_neurons(&self) -> usize {
        self.values.iter().map(Vec::len).sum()
    }

    /// (neuron, |c|) in layer-major order.
    pub fn iter(&self) -> impl Iterator<Item = (NeuronId, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .flat_map(|(l, v)| v.iter().enumerate().map(move |(u, &c)| (NeuronId::new(l, u), c)))
    }

    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "layer,unit,value")?;
        for (id, c) in self.iter() {
            writeln!(out, "{},{},{}", id.layer, id.unit, c)?;
        }
        Ok(())
    }

    /// Little-endian binary form tagged with the model's content hash.
    pub fn to_blob(&self, model_hash: &str) -> Result<Vec<u8>> {
        let hash = decode_hash(model_hash)?;
        let mut out = Vec::new();
        out.extend_from_slice(BLOB_MAGIC);
        out.extend_from_slice(&BLOB_VERSION.to_le_bytes());
        out.extend_from_slice(&hash);
        out.push(match self.method {
            ContributionMethod::NeuronMct => 0,
            ContributionMethod::NeuronIntGrad => 1,
        });
        out.extend_from_slice(&(self.steps.unwrap_or(0) as u32).to_le_bytes());
        out.extend_from_slice(&(self.class_index as u32).to_le_bytes());
        out.extend_from_slice(&(self.values.len() as u32).to_le_bytes());
        for (abs, signed) in self.values.iter().zip(&self.signed) {
            out.extend_from_slice(&(abs.len() as u32).to_le_bytes());
            for v in abs.iter().chain(signed) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    /// Parses a blob; returns the map and the model hash it was computed for.
    pub fn from_blob(bytes: &[u8]) -> Result<(Self, String)> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != BLOB_MAGIC {
            return Err(Error::Parse("not a contribution blob".into()));
        }
        let version = u16::from_le_bytes(r.take(2)?.try_into().expect("2 bytes"));
        if version != BLOB_VERSION {
            return Err(Error::Parse(format!("unsupported contribution blob version {version}")));
        }
        let hash = hex::encode(r.take(32)?);
        let method = match r.take(1)?[0] {
            0 => ContributionMethod::NeuronMct,
            1 => ContributionMethod::NeuronIntGrad,
            m => return Err(Error::Parse(format!("unknown method tag {m}"))),
        };
        let steps = r.u32()? as usize;
        let class_index = r.u32()? as usize;
        let layers = r.u32()? as usize;
        let (mut values, mut signed) = (Vec::with_capacity(layers), Vec::with_capacity(layers));
        for _ in 0..layers {
            let w = r.u32()? as usize;
            values.push((0..w).map(|_| r.f64()).collect::<Result<Vec<_>>>()?);
            signed.push((0..w).map(|_| r.f64()).collect::<Result<Vec<_>>>()?);
        }
        if r.pos != bytes.len() {
            return Err(Error::Parse("trailing bytes after contribution blob".into()));
        }
        let steps = (method == ContributionMethod::NeuronIntGrad).then_some(steps);
        Ok((Self { method, steps, class_index, values, signed }, hash))
    }
}

fn decode_hash(hash: &str) -> Result<[u8; 32]> {
    hex::decode(hash)
        .ok()
        .and_then(|v| <[u8; 32]>::try_from(v).ok())
        .ok_or_else(|| Error::InvalidParameter(format!("`{hash}` is not a 64-digit hex model hash")))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let s = self
            .bytes
            .get(self.pos..self.pos + n)
            .ok_or_else(|| Error::Parse("truncated contribution blob".into()))?;
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

fn from_signed(method: ContributionMethod, steps: Option<usize>, class_index: usize, signed: Vec<Vec<f64>>) -> ContributionMap {
    let values = signed.iter().map(|l| l.iter().map(|c| c.abs()).collect()).collect();
    ContributionMap { method, steps, class_index, values, signed }
}

/// Taylor score |a · ∂Φ/∂a| at the unmodified network.
pub fn neuron_mct(net: &Network, x: &[f64], class_index: usize) -> Result<ContributionMap> {
    let rec = forward_record(net, x, None, class_index)?;
    let grads = backward(net, &rec, None)?;
    let signed = rec
        .activations
        .iter()
        .zip(&grads.neuron_grads)
        .map(|(a, g)| a.iter().zip(g).map(|(a, g)| a * g).collect())
        .collect();
    Ok(from_signed(ContributionMethod::NeuronMct, None, class_index, signed))
}

/// Integrated score along the per-layer path with the default step count.
pub fn neuron_intgrad(net: &Network, x: &[f64], class_index: usize, steps: usize) -> Result<ContributionMap> {
    neuron_intgrad_with(net, x, class_index, steps, IntGradPath::PerLayer)
}

/// Midpoint abscissae α_k = (k + ½)/steps.
pub fn midpoints(steps: usize) -> impl Iterator<Item = f64> {
    (0..steps).map(move |k| (k as f64 + 0.5) / steps as f64)
}

pub fn neuron_intgrad_with(
    net: &Network,
    x: &[f64],
    class_index: usize,
    steps: usize,
    path: IntGradPath,
) -> Result<ContributionMap> {
    if steps == 0 {
        return Err(Error::InvalidParameter("integration needs at least one step".into()));
    }
    let rec = forward_record(net, x, None, class_index)?;
    let signed = match path {
        IntGradPath::PerLayer => {
            let jobs: Vec<(usize, f64)> =
                (0..net.num_hidden_layers()).flat_map(|l| midpoints(steps).map(move |a| (l, a))).collect();
            let integrands: Vec<Vec<f64>> = jobs
                .par_iter()
                .map(|&(layer, alpha)| {
                    let spec = InterceptSpec::gate_layer(net, layer, alpha)?;
                    let r = forward_record(net, x, Some(&spec), class_index)?;
                    // neuron_grads is ∂Φ/∂(αa), the integrand itself.
                    Ok(backward(net, &r, Some(&spec))?.neuron_grads.swap_remove(layer))
                })
                .collect::<Result<_>>()?;
            let mut signed: Vec<Vec<f64>> = rec.activations.iter().map(|a| vec![0.0; a.len()]).collect();
            for (&(layer, _), g) in jobs.iter().zip(&integrands) {
                signed[layer].iter_mut().zip(g).for_each(|(s, v)| *s += v);
            }
            for (s, a) in signed.iter_mut().zip(&rec.activations) {
                s.iter_mut().zip(a).for_each(|(s, a)| *s = a * (*s / steps as f64));
            }
            signed
        }
        IntGradPath::PerNeuron => {
            let ids: Vec<NeuronId> = net.neurons().collect();
            let per: Vec<f64> = ids
                .par_iter()
                .map(|&id| {
                    let a = rec.activation(id);
                    if a == 0.0 {
                        return Ok(0.0);
                    }
                    let mut total = 0.0;
                    for alpha in midpoints(steps) {
                        let mut spec = InterceptSpec::pass_through(net);
                        spec.set(id, Directive::Gate(alpha))?;
                        let r = forward_record(net, x, Some(&spec), class_index)?;
                        total += backward(net, &r, Some(&spec))?.neuron_grad(id);
                    }
                    Ok(a * total / steps as f64)
                })
                .collect::<Result<_>>()?;
            let mut it = per.into_iter();
            net.hidden_widths().iter().map(|&w| it.by_ref().take(w).collect()).collect()
        }
    };
    Ok(from_signed(ContributionMethod::NeuronIntGrad, Some(steps), class_index, signed))
}

/// Φ(x) − Φ(x; a_j ← 0), exact.
pub fn marginal_signed(net: &Network, x: &[f64], neuron: NeuronId, class_index: usize) -> Result<f64> {
    if !net.contains(neuron) {
        return Err(Error::NeuronOutOfRange(neuron));
    }
    let full = response(net, x, None, class_index)?;
    let mut spec = InterceptSpec::pass_through(net);
    spec.set(neuron, Directive::Gate(0.0))?;
    Ok(full - response(net, x, Some(&spec), class_index)?)
}

/// |Φ(x) − Φ(x; a_j ← 0)|.
pub fn marginal_exact(net: &Network, x: &[f64], neuron: NeuronId, class_index: usize) -> Result<f64> {
    marginal_signed(net, x, neuron, class_index).map(f64::abs)
}

/// Φ(x) − Φ(x; a^layer ← 0).
pub fn layer_ablation_delta(net: &Network, x: &[f64], layer: usize, class_index: usize) -> Result<f64> {
    let spec = InterceptSpec::gate_layer(net, layer, 0.0)?;
    Ok(response(net, x, None, class_index)? - response(net, x, Some(&spec), class_index)?)
}

/// Exact Shapley values of one hidden layer's neurons with a zero baseline,
/// by evaluating all 2^N coalitions.
pub fn shapley_bruteforce(net: &Network, x: &[f64], layer: usize, class_index: usize) -> Result<Vec<f64>> {
    let n = *net
        .hidden_widths()
        .get(layer)
        .ok_or(Error::NeuronOutOfRange(NeuronId::new(layer, 0)))?;
    if n > MAX_SHAPLEY_WIDTH {
        return Err(Error::LayerTooWide { layer, width: n, max: MAX_SHAPLEY_WIDTH });
    }
    let widths = net.hidden_widths();
    let value: Vec<f64> = (0..1usize << n)
        .into_par_iter()
        .map(|mask| {
            let mut gates: Vec<Vec<f64>> = widths.iter().map(|&w| vec![1.0; w]).collect();
            for (j, g) in gates[layer].iter_mut().enumerate() {
                *g = if mask >> j & 1 == 1 { 1.0 } else { 0.0 };
            }
            response(net, x, Some(&InterceptSpec::from_gates(net, &gates)?), class_index)
        })
        .collect::<Result<_>>()?;
    // |C|!(N-|C|-1)!/N! = 1 / (N · C(N-1, |C|)).
    let weight: Vec<f64> = (0..n).map(|s| 1.0 / (n as f64 * binomial(n - 1, s))).collect();
    Ok((0..n)
        .map(|j| {
            let bit = 1usize << j;
            (0..1usize << n)
                .filter(|m| m & bit == 0)
                .map(|m| weight[m.count_ones() as usize] * (value[m | bit] - value[m]))
                .sum()
        })
        .collect())
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64).round()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Dense, Layer, Shape};

    /// x → ReLU(W1 x + b1) → W2 · + b2.
    fn two_layer(w1: Vec<f64>, b1: Vec<f64>, w2: Vec<f64>, b2: Vec<f64>) -> Network {
        let inputs = w1.len() / b1.len();
        let hidden = b1.len();
        Network::new(
            Shape::flat(inputs),
            vec![
                Layer::Dense(Dense::new(inputs, hidden, w1, b1)),
                Layer::Relu,
                Layer::Dense(Dense::new(hidden, b2.len(), w2, b2)),
            ],
        )
        .unwrap()
    }

    #[test]
    fn linear_head_scores() {
        let net = two_layer(vec![1.0, 1.0], vec![0.0, 0.0], vec![2.0, 3.0], vec![0.0]);
        let x = [1.0];
        assert_eq!(neuron_mct(&net, &x, 0).unwrap().values, vec![vec![2.0, 3.0]]);
        for steps in [1, 7, 50] {
            assert_eq!(neuron_intgrad(&net, &x, 0, steps).unwrap().values, vec![vec![2.0, 3.0]]);
        }
        assert_eq!(marginal_exact(&net, &x, NeuronId::new(0, 0), 0).unwrap(), 2.0);
        let sh = shapley_bruteforce(&net, &x, 0, 0).unwrap();
        assert!((sh[0] - 2.0).abs() < 1e-12 && (sh[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn dead_neurons_score_zero() {
        let net = two_layer(vec![1.0, -1.0, 2.0], vec![0.0, 0.0, 0.0], vec![1.0, 5.0, -1.0], vec![0.0]);
        let x = [1.0];
        let mct = neuron_mct(&net, &x, 0).unwrap();
        let ig = neuron_intgrad(&net, &x, 0, 10).unwrap();
        assert_eq!(mct.values[0][1], 0.0);
        assert_eq!(ig.values[0][1], 0.0);
        assert_eq!(shapley_bruteforce(&net, &x, 0, 0).unwrap()[1], 0.0);
    }

    #[test]
    fn zero_steps_rejected() {
        let net = two_layer(vec![1.0], vec![0.0], vec![1.0], vec![0.0]);
        assert!(neuron_intgrad(&net, &[1.0], 0, 0).is_err());
    }

    #[test]
    fn wide_layer_rejected_for_shapley() {
        let net = two_layer(vec![1.0; 21], vec![0.0; 21], vec![1.0; 21], vec![0.0]);
        let err = shapley_bruteforce(&net, &[1.0], 0, 0).unwrap_err();
        assert!(matches!(err, Error::LayerTooWide { width: 21, .. }));
    }

    #[test]
    fn blob_round_trip() {
        let net = two_layer(vec![1.0, 0.5], vec![0.1, -0.2], vec![2.0, 3.0], vec![0.0]);
        let map = neuron_intgrad(&net, &[1.5], 0, 5).unwrap();
        let blob = map.to_blob(&net.content_hash()).unwrap();
        let (back, hash) = ContributionMap::from_blob(&blob).unwrap();
        assert_eq!(back, map);
        assert_eq!(hash, net.content_hash());
        assert!(ContributionMap::from_blob(&blob[..blob.len() - 1]).is_err());
    }

    #[test]
    fn csv_has_one_row_per_neuron() {
        let net = two_layer(vec![1.0, 0.5, 2.0], vec![0.0; 3], vec![1.0; 3], vec![0.0]);
        let mut buf = Vec::new();
        neuron_mct(&net, &[1.0], 0).unwrap().write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.starts_with("layer,unit,value\n0,0,1\n"));
    }
}
