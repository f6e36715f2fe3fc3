//! Input attribution maps: the frozen-pathway gradient and common baselines.

use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contrib::{midpoints, neuron_intgrad, neuron_mct, ContributionMap, ContributionMethod, DEFAULT_INTGRAD_STEPS};
use crate::error::{Error, Result};
use crate::nn::{backward, backward_logits, forward_record, Network, ReluRule, Shape};
use crate::pathway::{build_frozen, select_pathway, PathwayMask};

/// How input channels collapse to one value per pixel site.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    #[default]
    AbsSum,
    SignedSum,
}

pub fn reduce(shape: Shape, raw: &[f64], reduction: Reduction) -> Vec<f64> {
    let plane = shape.pixels();
    (0..plane)
        .map(|p| {
            (0..shape.channels)
                .map(|c| {
                    let v = raw[c * plane + p];
                    match reduction {
                        Reduction::AbsSum => v.abs(),
                        Reduction::SignedSum => v,
                    }
                })
                .sum()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathwayInfo {
    pub source: ContributionMethod,
    pub sparsity: f64,
    pub threshold: Option<f64>,
    pub kept: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionMap {
    pub shape: Shape,
    /// Input-shaped signed values.
    pub raw: Vec<f64>,
    /// One value per pixel site (H×W); after smoothing, the opened map.
    pub reduced: Vec<f64>,
    pub method: String,
    pub pathway: Option<PathwayInfo>,
    pub normalized: bool,
    pub smoothed: bool,
    pub warnings: Vec<String>,
}

impl AttributionMap {
    pub fn new(shape: Shape, raw: Vec<f64>, method: impl Into<String>) -> Self {
        Self::with_reduction(shape, raw, method, Reduction::AbsSum)
    }

    pub fn with_reduction(shape: Shape, raw: Vec<f64>, method: impl Into<String>, reduction: Reduction) -> Self {
        let reduced = reduce(shape, &raw, reduction);
        Self { shape, raw, reduced, method: method.into(), pathway: None, normalized: false, smoothed: false, warnings: Vec::new() }
    }

    /// A map given directly per pixel site (raw replicates it per channel).
    pub fn from_reduced(shape: Shape, reduced: Vec<f64>, method: impl Into<String>) -> Self {
        let raw = (0..shape.channels).flat_map(|_| reduced.iter().copied()).collect();
        Self { shape, raw, reduced, method: method.into(), pathway: None, normalized: false, smoothed: false, warnings: Vec::new() }
    }

    /// Writes the reduced map as `row,col,value`.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "row,col,value")?;
        for (i, v) in self.reduced.iter().enumerate() {
            writeln!(out, "{},{},{}", i / self.shape.width, i % self.shape.width, v)?;
        }
        Ok(())
    }

    /// 8-bit binary PGM of the reduced map; |value| / max |value| mapped to 0..255.
    pub fn write_pgm(&self, mut out: impl Write) -> std::io::Result<()> {
        let max = self.reduced.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        write!(out, "P5\n{} {}\n255\n", self.shape.width, self.shape.height)?;
        let bytes: Vec<u8> = self
            .reduced
            .iter()
            .map(|v| if max > 0.0 { (v.abs() / max * 255.0).round() as u8 } else { 0 })
            .collect();
        out.write_all(&bytes)
    }
}

/// Divides raw and reduced values by max |raw| (zero maps stay zero).
pub fn normalize_map(map: &AttributionMap) -> AttributionMap {
    let max = map.raw.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut out = map.clone();
    if max > 0.0 {
        out.raw.iter_mut().for_each(|v| *v /= max);
        out.reduced.iter_mut().for_each(|v| *v /= max);
    }
    out.normalized = true;
    out
}

fn min_max_filter(map: &[f64], h: usize, w: usize, k: usize, take_max: bool) -> Vec<f64> {
    let r = (k / 2) as isize;
    let mut out = vec![0.0; map.len()];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut acc = if take_max { f64::NEG_INFINITY } else { f64::INFINITY };
            for yy in (y - r).max(0)..=(y + r).min(h as isize - 1) {
                for xx in (x - r).max(0)..=(x + r).min(w as isize - 1) {
                    let v = map[yy as usize * w + xx as usize];
                    acc = if take_max { acc.max(v) } else { acc.min(v) };
                }
            }
            out[y as usize * w + x as usize] = acc;
        }
    }
    out
}

/// Grayscale opening (erosion then dilation) of the reduced map with a flat
/// `kernel x kernel` square; the window is clipped at the border.
pub fn smooth_opening(map: &AttributionMap, kernel: usize) -> Result<AttributionMap> {
    let (h, w) = (map.shape.height, map.shape.width);
    if kernel == 0 || kernel.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!("opening kernel must be odd and positive, got {kernel}")));
    }
    if kernel > h || kernel > w {
        return Err(Error::InvalidParameter(format!("opening kernel {kernel} larger than the {h}x{w} map")));
    }
    let eroded = min_max_filter(&map.reduced, h, w, kernel, false);
    let mut out = map.clone();
    out.reduced = min_max_filter(&eroded, h, w, kernel, true);
    out.smoothed = true;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMethod {
    Gradient,
    InputXGradient,
    InputIntGrad { steps: usize },
    GuidedBackprop,
    /// Feature maps of the given hidden layer, or the last convolutional one.
    GradCam { layer: Option<usize> },
}

impl BaselineMethod {
    pub fn name(&self) -> String {
        match self {
            BaselineMethod::Gradient => "gradient".into(),
            BaselineMethod::InputXGradient => "inputmct".into(),
            BaselineMethod::InputIntGrad { .. } => "inputintgrad".into(),
            BaselineMethod::GuidedBackprop => "gbp".into(),
            BaselineMethod::GradCam { .. } => "gradcam".into(),
        }
    }
}

impl FromStr for BaselineMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "gradient" | "grad" => BaselineMethod::Gradient,
            "inputxgrad" | "inputxgradient" | "inputmct" => BaselineMethod::InputXGradient,
            "inputintgrad" | "intgradinput" => BaselineMethod::InputIntGrad { steps: DEFAULT_INTGRAD_STEPS },
            "guidedbackprop" | "gbp" => BaselineMethod::GuidedBackprop,
            "gradcam" => BaselineMethod::GradCam { layer: None },
            _ => return Err(Error::Parse(format!("unknown attribution method `{s}`"))),
        })
    }
}

pub fn baseline_attribution(net: &Network, x: &[f64], class_index: usize, method: BaselineMethod) -> Result<AttributionMap> {
    let shape = net.input_shape();
    let grad_at = |input: &[f64]| -> Result<Vec<f64>> {
        let rec = forward_record(net, input, None, class_index)?;
        Ok(backward(net, &rec, None)?.input_grad)
    };
    let raw = match method {
        BaselineMethod::Gradient => grad_at(x)?,
        BaselineMethod::InputXGradient => grad_at(x)?.iter().zip(x).map(|(g, v)| g * v).collect(),
        BaselineMethod::InputIntGrad { steps } => {
            if steps == 0 {
                return Err(Error::InvalidParameter("integration needs at least one step".into()));
            }
            let grads: Vec<Vec<f64>> = midpoints(steps)
                .collect::<Vec<_>>()
                .par_iter()
                .map(|&a| grad_at(&x.iter().map(|v| a * v).collect::<Vec<_>>()))
                .collect::<Result<_>>()?;
            let mut mean = vec![0.0; x.len()];
            for g in &grads {
                mean.iter_mut().zip(g).for_each(|(m, g)| *m += g);
            }
            mean.iter().zip(x).map(|(m, v)| v * m / steps as f64).collect()
        }
        BaselineMethod::GuidedBackprop => {
            let rec = forward_record(net, x, None, class_index)?;
            let mut seed = vec![0.0; net.num_classes()];
            seed[class_index] = 1.0;
            backward_logits(net, &rec, &seed, ReluRule::Guided)?.input_grad
        }
        BaselineMethod::GradCam { layer } => return gradcam(net, x, class_index, layer),
    };
    Ok(AttributionMap::new(shape, raw, method.name()))
}

fn gradcam(net: &Network, x: &[f64], class_index: usize, layer: Option<usize>) -> Result<AttributionMap> {
    let hidden = net.hidden_layers();
    let layer = match layer {
        Some(l) if hidden.get(l).is_some_and(|h| h.convolutional) => l,
        Some(l) => return Err(Error::InvalidParameter(format!("hidden layer {l} is not convolutional"))),
        None => hidden.iter().rposition(|h| h.convolutional).ok_or(Error::NoConvLayer)?,
    };
    let fmap = hidden[layer].shape;
    let rec = forward_record(net, x, None, class_index)?;
    let grads = backward(net, &rec, None)?;
    let (a, g) = (&rec.activations[layer], &grads.neuron_grads[layer]);
    let plane = fmap.pixels();
    let weights: Vec<f64> = (0..fmap.channels).map(|k| g[k * plane..(k + 1) * plane].iter().sum::<f64>() / plane as f64).collect();
    let cam: Vec<f64> = (0..plane)
        .map(|p| (0..fmap.channels).map(|k| weights[k] * a[k * plane + p]).sum::<f64>().max(0.0))
        .collect();
    let shape = net.input_shape();
    let up = bilinear_resize(&cam, fmap.height, fmap.width, shape.height, shape.width);
    Ok(AttributionMap::from_reduced(shape, up, "gradcam"))
}

/// Bilinear resize with half-pixel centers (align_corners = false).
pub fn bilinear_resize(src: &[f64], h: usize, w: usize, out_h: usize, out_w: usize) -> Vec<f64> {
    let coord = |o: usize, n_in: usize, n_out: usize| -> (usize, usize, f64) {
        let s = ((o as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).clamp(0.0, (n_in - 1) as f64);
        let i0 = s.floor() as usize;
        (i0, (i0 + 1).min(n_in - 1), s - i0 as f64)
    };
    let mut out = Vec::with_capacity(out_h * out_w);
    for oy in 0..out_h {
        let (y0, y1, fy) = coord(oy, h, out_h);
        for ox in 0..out_w {
            let (x0, x1, fx) = coord(ox, w, out_w);
            let top = src[y0 * w + x0] * (1.0 - fx) + src[y0 * w + x1] * fx;
            let bot = src[y1 * w + x0] * (1.0 - fx) + src[y1 * w + x1] * fx;
            out.push(top * (1.0 - fy) + bot * fy);
        }
    }
    out
}

/// ∇_x of the frozen network built from `mask` at the reference input.
pub fn pathway_gradient_from_mask(net: &Network, x: &[f64], class_index: usize, mask: &PathwayMask) -> Result<Vec<f64>> {
    let rec = forward_record(net, x, None, class_index)?;
    build_frozen(net, &rec, mask)?.input_gradient(x)
}

/// Gradient of the frozen pathway selected from the given contributions.
pub fn pathway_gradient_with(
    net: &Network,
    x: &[f64],
    contributions: &ContributionMap,
    sparsity: f64,
) -> Result<AttributionMap> {
    let shape = net.input_shape();
    let name = format!("pathway-{}", contributions.method.name());
    let mask = match select_pathway(contributions, sparsity) {
        Ok(m) => m,
        Err(Error::AllZeroContributions) => {
            let mut map = AttributionMap::new(shape, vec![0.0; shape.len()], name);
            map.warnings.push("all neuron contributions are zero; every neuron frozen".into());
            return Ok(map);
        }
        Err(e) => return Err(e),
    };
    let raw = pathway_gradient_from_mask(net, x, contributions.class_index, &mask)?;
    let mut map = AttributionMap::new(shape, raw, name);
    if !mask.threshold_positive() {
        map.warnings.push("pathway threshold is zero; zero-contribution neurons were admitted by the tie-break".into());
    }
    map.pathway = Some(PathwayInfo {
        source: contributions.method,
        sparsity,
        threshold: mask.threshold,
        kept: mask.kept_count(),
    });
    Ok(map)
}

pub fn pathway_gradient(
    net: &Network,
    x: &[f64],
    class_index: usize,
    method: ContributionMethod,
    sparsity: f64,
) -> Result<AttributionMap> {
    let c = match method {
        ContributionMethod::NeuronMct => neuron_mct(net, x, class_index)?,
        ContributionMethod::NeuronIntGrad => neuron_intgrad(net, x, class_index, DEFAULT_INTGRAD_STEPS)?,
    };
    pathway_gradient_with(net, x, &c, sparsity)
}
