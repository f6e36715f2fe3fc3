use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::attribution::{
    baseline_attribution, pathway_gradient_with, reduce, smooth_opening, AttributionMap, BaselineMethod, Reduction,
};
use crate::contrib::{neuron_intgrad, neuron_mct, ContributionMethod, DEFAULT_INTGRAD_STEPS};
use crate::error::{Error, Result};
use crate::nn::{Network, Shape};

/// Anything that turns (network, input, class) into an attribution map.
pub trait Attributor: Send + Sync {
    fn name(&self) -> String;
    fn attribute(&self, net: &Network, x: &[f64], class_index: usize) -> Result<AttributionMap>;
}

pub const DEFAULT_PATHWAY_SPARSITY: f64 = 0.9;
pub const DEFAULT_OPENING_KERNEL: usize = 3;

/// The attribution methods compared by the harness.
#[derive(Debug, Clone, PartialEq)]
pub enum Method {
    /// Gradient of the frozen pathway selected by neuron contributions.
    Pathway { source: ContributionMethod, sparsity: f64, steps: usize },
    Baseline(BaselineMethod),
    /// Uniform noise seeded from `seed` and the input bytes.
    Random { seed: u64 },
    /// Ground-truth informative sites scored 1, the rest 0.
    Oracle { sites: Vec<usize> },
    /// Sobel gradient magnitude of the channel-summed input; ignores the network.
    EdgeFilter,
}

/// A method with its channel reduction and optional morphological opening
/// of the reduced map.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodAttributor {
    pub method: Method,
    pub opening: Option<usize>,
    pub reduction: Reduction,
}

impl MethodAttributor {
    pub fn new(method: Method) -> Self {
        Self { method, opening: None, reduction: Reduction::AbsSum }
    }

    pub fn smoothed(method: Method, kernel: usize) -> Self {
        Self { opening: Some(kernel), ..Self::new(method) }
    }
}

impl fmt::Display for MethodAttributor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.method {
            Method::Pathway { source, .. } => f.write_str(source.name())?,
            Method::Baseline(b) => f.write_str(&b.name())?,
            Method::Random { .. } => f.write_str("random")?,
            Method::Oracle { .. } => f.write_str("oracle")?,
            Method::EdgeFilter => f.write_str("edge")?,
        }
        if self.opening.is_some() {
            f.write_str("*")?;
        }
        Ok(())
    }
}

impl FromStr for MethodAttributor {
    type Err = Error;

    /// Accepts method names; a trailing `*` requests opening with a 3x3 kernel.
    /// `oracle` needs its sites filled in afterwards.
    fn from_str(s: &str) -> Result<Self> {
        let (base, opening) = match s.strip_suffix('*') {
            Some(b) => (b, Some(DEFAULT_OPENING_KERNEL)),
            None => (s, None),
        };
        let key = base.to_ascii_lowercase().replace(['-', '_'], "");
        let method = match key.as_str() {
            "neuronmct" | "pathwaymct" => Method::Pathway {
                source: ContributionMethod::NeuronMct,
                sparsity: DEFAULT_PATHWAY_SPARSITY,
                steps: DEFAULT_INTGRAD_STEPS,
            },
            "neuronintgrad" | "pathwaygradient" | "pathway" => Method::Pathway {
                source: ContributionMethod::NeuronIntGrad,
                sparsity: DEFAULT_PATHWAY_SPARSITY,
                steps: DEFAULT_INTGRAD_STEPS,
            },
            "random" => Method::Random { seed: 0 },
            "oracle" => Method::Oracle { sites: Vec::new() },
            "edge" | "edgefilter" => Method::EdgeFilter,
            _ => Method::Baseline(base.parse()?),
        };
        Ok(Self { method, opening, reduction: Reduction::AbsSum })
    }
}

impl Attributor for MethodAttributor {
    fn name(&self) -> String {
        self.to_string()
    }

    fn attribute(&self, net: &Network, x: &[f64], class_index: usize) -> Result<AttributionMap> {
        let shape = net.input_shape();
        let mut map = match &self.method {
            Method::Pathway { source, sparsity, steps } => {
                let c = match source {
                    ContributionMethod::NeuronMct => neuron_mct(net, x, class_index)?,
                    ContributionMethod::NeuronIntGrad => neuron_intgrad(net, x, class_index, *steps)?,
                };
                pathway_gradient_with(net, x, &c, *sparsity)?
            }
            Method::Baseline(b) => baseline_attribution(net, x, class_index, *b)?,
            Method::Random { seed } => random_map(shape, x, *seed),
            Method::Oracle { sites } => {
                if sites.is_empty() {
                    return Err(Error::InvalidParameter("oracle attribution needs ground-truth sites".into()));
                }
                let mut reduced = vec![0.0; shape.pixels()];
                for &s in sites {
                    *reduced.get_mut(s).ok_or_else(|| Error::InvalidParameter(format!("oracle site {s} out of range")))? = 1.0;
                }
                AttributionMap::from_reduced(shape, reduced, "oracle")
            }
            Method::EdgeFilter => edge_map(shape, x),
        };
        if self.reduction != Reduction::AbsSum {
            map.reduced = reduce(shape, &map.raw, self.reduction);
        }
        match self.opening {
            Some(k) => smooth_opening(&map, k),
            None => Ok(map),
        }
    }
}

fn random_map(shape: Shape, x: &[f64], seed: u64) -> AttributionMap {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    x.iter().for_each(|v| h.update(v.to_le_bytes()));
    let digest = h.finalize();
    let mut rng = ChaCha8Rng::from_seed(digest.into());
    let reduced = (0..shape.pixels()).map(|_| rng.random::<f64>()).collect();
    AttributionMap::from_reduced(shape, reduced, "random")
}

fn edge_map(shape: Shape, x: &[f64]) -> AttributionMap {
    let (h, w) = (shape.height as isize, shape.width as isize);
    let plane = shape.pixels();
    let sum: Vec<f64> = (0..plane).map(|p| (0..shape.channels).map(|c| x[c * plane + p]).sum()).collect();
    let at = |y: isize, x: isize| sum[(y.clamp(0, h - 1) * w + x.clamp(0, w - 1)) as usize];
    let mut reduced = Vec::with_capacity(plane);
    for y in 0..h {
        for c in 0..w {
            let gx = at(y - 1, c + 1) + 2.0 * at(y, c + 1) + at(y + 1, c + 1) - at(y - 1, c - 1) - 2.0 * at(y, c - 1) - at(y + 1, c - 1);
            let gy = at(y + 1, c - 1) + 2.0 * at(y + 1, c) + at(y + 1, c + 1) - at(y - 1, c - 1) - 2.0 * at(y - 1, c) - at(y - 1, c + 1);
            reduced.push((gx * gx + gy * gy).sqrt());
        }
    }
    AttributionMap::from_reduced(shape, reduced, "edge")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Dense, Layer};

    fn tiny() -> Network {
        Network::new(Shape::new(1, 2, 2), vec![Layer::Flatten, Layer::Dense(Dense::new(4, 2, vec![1.0; 8], vec![0.0; 2]))]).unwrap()
    }

    #[test]
    fn names_round_trip() {
        for name in ["neuronintgrad", "neuronmct*", "inputintgrad", "inputmct", "gradient", "gbp", "gradcam", "random", "edge"] {
            let a: MethodAttributor = name.parse().unwrap();
            assert_eq!(a.to_string(), name);
        }
        assert!("nonsense".parse::<MethodAttributor>().is_err());
    }

    #[test]
    fn random_map_depends_on_input_and_seed() {
        let net = tiny();
        let r = MethodAttributor::new(Method::Random { seed: 1 });
        let a = r.attribute(&net, &[0.0, 0.1, 0.2, 0.3], 0).unwrap();
        assert_eq!(a, r.attribute(&net, &[0.0, 0.1, 0.2, 0.3], 0).unwrap());
        assert_ne!(a.reduced, r.attribute(&net, &[0.0, 0.1, 0.2, 0.4], 0).unwrap().reduced);
        let other = MethodAttributor::new(Method::Random { seed: 2 });
        assert_ne!(a.reduced, other.attribute(&net, &[0.0, 0.1, 0.2, 0.3], 0).unwrap().reduced);
    }

    #[test]
    fn oracle_marks_sites() {
        let a = MethodAttributor::new(Method::Oracle { sites: vec![2] });
        assert_eq!(a.attribute(&tiny(), &[0.0; 4], 0).unwrap().reduced, vec![0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn edge_filter_sees_a_step() {
        let shape = Shape::new(1, 3, 3);
        let flat = edge_map(shape, &[1.0; 9]);
        assert!(flat.reduced.iter().all(|&v| v == 0.0));
        let step = edge_map(shape, &[0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
        assert!(step.reduced[4] > 0.0);
    }
}
