//! Activation patterns and certified linear regions.
//!
//! Inside the ℓ2 ball whose radius is the distance to the nearest live
//! neuron's hyperplane z = 0, the activation pattern cannot change, so the
//! response is affine there.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{backward, forward_record, preactivation_input_grad, ActivationRecord, InterceptSpec, Network, NeuronId};
use crate::pathway::FrozenNetwork;

/// 1 iff a > 0, per hidden neuron.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivationPattern {
    pub layers: Vec<Vec<bool>>,
}

impl ActivationPattern {
    pub fn from_record(record: &ActivationRecord) -> Self {
        Self { layers: record.pre_activations.iter().map(|z| z.iter().map(|&v| v > 0.0).collect()).collect() }
    }

    pub fn get(&self, id: NeuronId) -> bool {
        self.layers[id.layer][id.unit]
    }

    /// Neurons whose indicator differs.
    pub fn differences(&self, other: &ActivationPattern) -> Vec<NeuronId> {
        let mut out = Vec::new();
        for (l, (a, b)) in self.layers.iter().zip(&other.layers).enumerate() {
            out.extend(a.iter().zip(b).enumerate().filter(|(_, (x, y))| x != y).map(|(u, _)| NeuronId::new(l, u)));
        }
        out
    }
}

/// A network viewed as a piecewise-linear function of its input, together
/// with the neurons whose hyperplanes can bound its linear region.
#[derive(Debug, Clone)]
pub struct Surrogate<'a> {
    net: &'a Network,
    intercept: Option<InterceptSpec>,
    live: Option<Vec<Vec<bool>>>,
    class_index: usize,
}

impl<'a> Surrogate<'a> {
    /// The unmodified network; every hidden neuron is live.
    pub fn full(net: &'a Network, class_index: usize) -> Self {
        Self { net, intercept: None, live: None, class_index }
    }

    /// A frozen pathway network; only pathway neurons are live.
    pub fn frozen(f: &FrozenNetwork<'a>) -> Self {
        Self {
            net: f.network(),
            intercept: Some(f.intercept().clone()),
            live: Some(f.mask().layers.clone()),
            class_index: f.class_index(),
        }
    }

    pub fn network(&self) -> &'a Network {
        self.net
    }

    pub fn class_index(&self) -> usize {
        self.class_index
    }

    pub fn is_live(&self, id: NeuronId) -> bool {
        self.live.as_ref().is_none_or(|l| l[id.layer][id.unit])
    }

    pub fn forward(&self, x: &[f64]) -> Result<ActivationRecord> {
        forward_record(self.net, x, self.intercept.as_ref(), self.class_index)
    }

    pub fn response(&self, x: &[f64]) -> Result<f64> {
        self.forward(x).map(|r| r.output)
    }

    pub fn input_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let rec = self.forward(x)?;
        Ok(backward(self.net, &rec, self.intercept.as_ref())?.input_grad)
    }

    /// Pattern restricted to live neurons (dead entries are `false`).
    pub fn live_pattern(&self, record: &ActivationRecord) -> ActivationPattern {
        let mut ap = ActivationPattern::from_record(record);
        for (l, layer) in ap.layers.iter_mut().enumerate() {
            for (u, bit) in layer.iter_mut().enumerate() {
                *bit &= self.is_live(NeuronId::new(l, u));
            }
        }
        ap
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperplaneDistance {
    pub neuron: NeuronId,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearRegionReport {
    /// ε̂: radius of the certified ℓ2 ball; infinite when no live neuron has
    /// a non-zero input gradient.
    pub radius: f64,
    pub argmin: Option<NeuronId>,
    pub distances: Vec<HyperplaneDistance>,
    pub live_neurons: usize,
    /// Live neurons skipped because ∇_x z = 0.
    pub excluded_zero_gradient: usize,
    /// g = ∇_x Φ̂ at x.
    pub gradient: Vec<f64>,
    /// β = Φ̂(x) − g·x.
    pub offset: f64,
    pub output: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// ε̂ = min |z| / ‖∇_x z‖ over live neurons with ∇_x z ≠ 0.
pub fn linear_region_radius(model: &Surrogate, x: &[f64]) -> Result<LinearRegionReport> {
    let rec = model.forward(x)?;
    let live: Vec<NeuronId> = model.net.neurons().filter(|&id| model.is_live(id)).collect();
    let per: Vec<Option<HyperplaneDistance>> = live
        .par_iter()
        .map(|&id| {
            let g = preactivation_input_grad(model.net, &rec, id)?;
            let n = norm(&g);
            Ok((n > 0.0).then(|| HyperplaneDistance { neuron: id, distance: rec.pre_activation(id).abs() / n }))
        })
        .collect::<Result<_>>()?;
    let excluded_zero_gradient = per.iter().filter(|d| d.is_none()).count();
    let distances: Vec<HyperplaneDistance> = per.into_iter().flatten().collect();
    if let Some(d) = distances.iter().find(|d| d.distance == 0.0) {
        return Err(Error::BoundaryPoint { neuron: d.neuron });
    }
    let best = distances.iter().min_by(|a, b| a.distance.total_cmp(&b.distance).then(a.neuron.cmp(&b.neuron)));
    let gradient = backward(model.net, &rec, model.intercept.as_ref())?.input_grad;
    let offset = rec.output - dot(&gradient, x);
    Ok(LinearRegionReport {
        radius: best.map_or(f64::INFINITY, |d| d.distance),
        argmin: best.map(|d| d.neuron),
        live_neurons: live.len(),
        excluded_zero_gradient,
        distances,
        gradient,
        offset,
        output: rec.output,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyOutcome {
    pub passed: bool,
    pub samples: usize,
    pub radius: f64,
    /// Largest |Φ̂(x̄) − (g·x̄ + β)| / max(1, |Φ̂(x̄)|).
    pub max_deviation: f64,
    /// Samples whose live activation pattern differed from the one at x.
    pub pattern_violations: usize,
    pub reason: Option<String>,
}

pub const LINEARITY_TOLERANCE: f64 = 1e-6;

/// Uniform point in the ℓ2 ball of the given radius around `center`.
pub fn sample_ball<R: Rng + ?Sized>(rng: &mut R, center: &[f64], radius: f64) -> Vec<f64> {
    let mut dir: Vec<f64> = (0..center.len()).map(|_| rng.sample(StandardNormal)).collect();
    let n = norm(&dir);
    if n == 0.0 {
        return center.to_vec();
    }
    let r = radius * rng.random::<f64>().powf(1.0 / center.len() as f64);
    dir.iter_mut().zip(center).for_each(|(d, c)| *d = c + *d / n * r);
    dir
}

/// Samples the ball of radius (1−δ)·ε̂ and checks that the live pattern is
/// unchanged and the response matches the affine form.
pub fn verify_linear_region(
    model: &Surrogate,
    x: &[f64],
    report: &LinearRegionReport,
    samples: usize,
    shrink: f64,
    seed: u64,
) -> Result<VerifyOutcome> {
    if samples == 0 {
        return Err(Error::InvalidParameter("at least one sample is required".into()));
    }
    if !(shrink > 0.0 && shrink < 1.0) {
        return Err(Error::InvalidParameter(format!("shrink {shrink} outside (0, 1)")));
    }
    let fail = |reason: &str| VerifyOutcome {
        passed: false,
        samples: 0,
        radius: 0.0,
        max_deviation: 0.0,
        pattern_violations: 0,
        reason: Some(reason.into()),
    };
    if report.radius <= 0.0 {
        return Ok(fail("radius is zero (x lies on a hyperplane)"));
    }
    let radius = if report.radius.is_finite() { (1.0 - shrink) * report.radius } else { 1.0 };
    let reference = model.live_pattern(&model.forward(x)?);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<Vec<f64>> = (0..samples).map(|_| sample_ball(&mut rng, x, radius)).collect();
    let checks: Vec<(f64, bool)> = points
        .par_iter()
        .map(|p| {
            let rec = model.forward(p)?;
            let affine = dot(&report.gradient, p) + report.offset;
            let dev = (rec.output - affine).abs() / rec.output.abs().max(1.0);
            Ok((dev, model.live_pattern(&rec) == reference))
        })
        .collect::<Result<_>>()?;
    let max_deviation = checks.iter().map(|c| c.0).fold(0.0, f64::max);
    let pattern_violations = checks.iter().filter(|c| !c.1).count();
    let passed = pattern_violations == 0 && max_deviation <= LINEARITY_TOLERANCE;
    let reason = (!passed).then(|| {
        if pattern_violations > 0 {
            format!("{pattern_violations} samples changed the activation pattern")
        } else {
            format!("deviation {max_deviation:e} exceeds {LINEARITY_TOLERANCE:e}")
        }
    });
    Ok(VerifyOutcome { passed, samples, radius, max_deviation, pattern_violations, reason })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Dense, Layer, Shape};

    fn net(w1: Vec<f64>, b1: Vec<f64>, w2: Vec<f64>) -> Network {
        let h = b1.len();
        Network::new(
            Shape::flat(1),
            vec![Layer::Dense(Dense::new(1, h, w1, b1)), Layer::Relu, Layer::Dense(Dense::new(h, 1, w2, vec![0.0]))],
        )
        .unwrap()
    }

    #[test]
    fn single_kink() {
        let n = net(vec![2.0], vec![-1.0], vec![1.0]);
        let r = linear_region_radius(&Surrogate::full(&n, 0), &[2.0]).unwrap();
        assert_eq!(r.radius, 1.5);
        assert_eq!(r.argmin, Some(NeuronId::new(0, 0)));
        assert_eq!(r.gradient, vec![2.0]);
        assert_eq!(r.offset, -1.0);
    }

    #[test]
    fn dead_neurons_still_bound_the_full_network() {
        let n = net(vec![1.0, 1.0], vec![0.0, -10.0], vec![1.0, 1.0]);
        let r = linear_region_radius(&Surrogate::full(&n, 0), &[3.0]).unwrap();
        let d: Vec<f64> = r.distances.iter().map(|d| d.distance).collect();
        assert_eq!(d, vec![3.0, 7.0]);
        assert_eq!(r.radius, 3.0);
    }

    #[test]
    fn boundary_point_is_reported() {
        let n = net(vec![1.0], vec![0.0], vec![1.0]);
        let err = linear_region_radius(&Surrogate::full(&n, 0), &[0.0]).unwrap_err();
        assert!(matches!(err, Error::BoundaryPoint { neuron } if neuron == NeuronId::new(0, 0)));
    }

    #[test]
    fn affine_network_passes_any_radius() {
        let n = Network::new(Shape::flat(2), vec![Layer::Dense(Dense::new(2, 1, vec![1.5, -2.0], vec![0.25]))]).unwrap();
        let s = Surrogate::full(&n, 0);
        let r = linear_region_radius(&s, &[1.0, 1.0]).unwrap();
        assert!(r.radius.is_infinite());
        assert!(verify_linear_region(&s, &[1.0, 1.0], &r, 16, 0.01, 0).unwrap().passed);
    }

    #[test]
    fn zero_radius_fails_vacuously() {
        let n = net(vec![1.0], vec![0.0], vec![1.0]);
        let s = Surrogate::full(&n, 0);
        let mut r = linear_region_radius(&s, &[1.0]).unwrap();
        r.radius = 0.0;
        let out = verify_linear_region(&s, &[1.0], &r, 4, 0.01, 0).unwrap();
        assert!(!out.passed && out.reason.is_some());
    }

    #[test]
    fn ball_samples_stay_inside() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let p = sample_ball(&mut rng, &[1.0, 2.0, 3.0], 0.5);
            let d = ((p[0] - 1.0).powi(2) + (p[1] - 2.0).powi(2) + (p[2] - 3.0).powi(2)).sqrt();
            assert!(d <= 0.5);
        }
    }
}
