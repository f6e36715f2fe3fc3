//! Pathway selectors derived from pruning objectives: greedy removal of the
//! lowest-scoring live neuron, and continuous gates trained to preserve the
//! output under an ℓ1 penalty.

use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{backward, backward_logits, forward_record, ActivationRecord, InterceptSpec, Network, NeuronId, ReluRule};
use crate::pathway::{kept_target, select_top, PathwayMask, Provenance};
use crate::train::{loss_and_grad, Loss};

/// Trace of a greedy pruning run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneState {
    pub mask: Vec<Vec<bool>>,
    /// Scores from the last rescoring pass.
    pub scores: Vec<Vec<f64>>,
    /// Kept count before each pass; the last entry is the final count.
    pub kept_history: Vec<usize>,
    /// |Φ(x; m⊙a) − Φ(x)| alongside `kept_history`.
    pub drift: Vec<f64>,
    /// Neurons in removal order.
    pub removed: Vec<NeuronId>,
    /// Set when no neuron with a non-zero score remained before the target.
    pub stopped_early: bool,
}

impl PruneState {
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "pass,kept,drift")?;
        for (i, (k, d)) in self.kept_history.iter().zip(&self.drift).enumerate() {
            writeln!(out, "{i},{k},{d}")?;
        }
        Ok(())
    }
}

pub fn default_chunk(num_neurons: usize) -> usize {
    (num_neurons / 100).max(1)
}

/// Repeatedly rescores s = |a · ∂Φ/∂a| under the current mask and removes
/// the `chunk` lowest-scoring neurons whose score is non-zero.
pub fn greedy_prune(
    net: &Network,
    x: &[f64],
    class_index: usize,
    sparsity: f64,
    chunk: usize,
) -> Result<(PathwayMask, PruneState)> {
    if !(0.0..1.0).contains(&sparsity) {
        return Err(Error::InvalidParameter(format!("sparsity {sparsity} outside [0, 1)")));
    }
    if chunk == 0 {
        return Err(Error::InvalidParameter("chunk must be at least 1".into()));
    }
    let widths = net.hidden_widths();
    let target = kept_target(net.num_neurons(), sparsity);
    let original = forward_record(net, x, None, class_index)?.output;
    let mut gates: Vec<Vec<f64>> = widths.iter().map(|&w| vec![1.0; w]).collect();
    let mut kept = net.num_neurons();
    let mut state = PruneState {
        mask: Vec::new(),
        scores: Vec::new(),
        kept_history: Vec::new(),
        drift: Vec::new(),
        removed: Vec::new(),
        stopped_early: false,
    };
    loop {
        let spec = InterceptSpec::from_gates(net, &gates)?;
        let rec = forward_record(net, x, Some(&spec), class_index)?;
        state.kept_history.push(kept);
        state.drift.push((rec.output - original).abs());
        if kept <= target {
            break;
        }
        let grads = backward(net, &rec, Some(&spec))?;
        state.scores = rec
            .activations
            .iter()
            .zip(&grads.neuron_grads)
            .zip(&gates)
            .map(|((a, g), m)| a.iter().zip(g).zip(m).map(|((a, g), m)| if *m == 1.0 { (a * g).abs() } else { 0.0 }).collect())
            .collect();
        let mut candidates: Vec<(NeuronId, f64)> = net
            .neurons()
            .filter(|id| gates[id.layer][id.unit] == 1.0)
            .map(|id| (id, state.scores[id.layer][id.unit]))
            .filter(|&(_, s)| s != 0.0)
            .collect();
        if candidates.is_empty() {
            state.stopped_early = true;
            break;
        }
        candidates.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        for &(id, _) in candidates.iter().take(chunk.min(kept - target)) {
            gates[id.layer][id.unit] = 0.0;
            state.removed.push(id);
            kept -= 1;
        }
    }
    state.mask = gates.iter().map(|l| l.iter().map(|&g| g == 1.0).collect()).collect();
    let mask = PathwayMask { layers: state.mask.clone(), sparsity, threshold: None, provenance: Provenance::GreedyPruning };
    Ok((mask, state))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateInit {
    Ones,
    Uniform,
}

impl FromStr for GateInit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1" | "ones" => Ok(GateInit::Ones),
            "random" | "uniform" => Ok(GateInit::Uniform),
            _ => Err(Error::Parse(format!("unknown gate init `{s}` (expected ones or random)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateLoss {
    /// (Φ_gated − Φ)² on the analyzed logit.
    SquaredError,
    /// Softmax cross-entropy of the gated logits against the original prediction.
    CrossEntropy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgrConfig {
    pub gamma: f64,
    pub init: GateInit,
    pub learning_rate: f64,
    pub iterations: usize,
    pub seed: u64,
    pub loss: GateLoss,
    /// Sparsity of the pathway read off the final gates.
    pub sparsity: f64,
}

impl Default for DgrConfig {
    fn default() -> Self {
        Self {
            gamma: 0.05,
            init: GateInit::Ones,
            learning_rate: 0.1,
            iterations: 30,
            seed: 0,
            loss: GateLoss::SquaredError,
            sparsity: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateVector {
    pub lambdas: Vec<Vec<f64>>,
    pub gamma: f64,
    /// Objective at the initial gates and after every accepted step.
    pub objective: Vec<f64>,
}

impl GateVector {
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "iteration,objective")?;
        for (i, v) in self.objective.iter().enumerate() {
            writeln!(out, "{i},{v}")?;
        }
        Ok(())
    }
}

/// Steps tried per iteration before the optimizer declares convergence.
pub const MAX_STEP_HALVINGS: usize = 40;

/// Projected gradient descent on ℒ(Φ(x), Φ(x; Λ⊙a)) + γ Σ λ with λ ≥ 0.
///
/// Each step starts at the configured learning rate and is halved until the
/// objective does not increase; iteration stops early when no such step exists.
pub fn dgr_optimize(net: &Network, x: &[f64], class_index: usize, cfg: &DgrConfig) -> Result<(GateVector, PathwayMask)> {
    if !(cfg.gamma >= 0.0 && cfg.gamma.is_finite()) {
        return Err(Error::InvalidParameter(format!("gamma {} must be finite and >= 0", cfg.gamma)));
    }
    if !(cfg.learning_rate > 0.0 && cfg.learning_rate.is_finite()) {
        return Err(Error::InvalidParameter(format!("learning rate {} must be finite and > 0", cfg.learning_rate)));
    }
    let reference = forward_record(net, x, None, class_index)?;
    let target_class = reference.predicted_class();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut lambdas: Vec<Vec<f64>> = net
        .hidden_widths()
        .iter()
        .map(|&w| match cfg.init {
            GateInit::Ones => vec![1.0; w],
            GateInit::Uniform => (0..w).map(|_| rng.random_range(0.0..=1.0)).collect(),
        })
        .collect();
    let evaluate = |lambdas: &[Vec<f64>]| -> Result<(f64, ActivationRecord, Vec<f64>)> {
        let spec = InterceptSpec::from_gates(net, lambdas)?;
        let rec = forward_record(net, x, Some(&spec), class_index)?;
        let (loss, logit_grad) = match cfg.loss {
            GateLoss::SquaredError => {
                let d = rec.output - reference.output;
                let mut g = vec![0.0; rec.logits.len()];
                g[class_index] = 2.0 * d;
                (d * d, g)
            }
            GateLoss::CrossEntropy => loss_and_grad(Loss::CrossEntropy, &rec.logits, target_class),
        };
        Ok((loss + cfg.gamma * lambdas.iter().flatten().sum::<f64>(), rec, logit_grad))
    };
    let (mut value, mut rec, mut logit_grad) = evaluate(&lambdas)?;
    if !value.is_finite() {
        return Err(Error::NonFiniteObjective { iteration: 0 });
    }
    let mut objective = vec![value];
    'outer: for _ in 0..cfg.iterations {
        let grads = backward_logits(net, &rec, &logit_grad, ReluRule::Standard)?;
        let step: Vec<Vec<f64>> = rec
            .activations
            .iter()
            .zip(&grads.neuron_grads)
            .map(|(a, g)| a.iter().zip(g).map(|(a, g)| a * g + cfg.gamma).collect())
            .collect();
        // Backtrack until the projected step does not increase the objective.
        let mut lr = cfg.learning_rate;
        for _ in 0..MAX_STEP_HALVINGS {
            let trial: Vec<Vec<f64>> = lambdas
                .iter()
                .zip(&step)
                .map(|(lam, s)| lam.iter().zip(s).map(|(l, s)| (l - lr * s).max(0.0)).collect())
                .collect();
            let (v, r, g) = evaluate(&trial)?;
            if v.is_finite() && v <= value {
                (lambdas, value, rec, logit_grad) = (trial, v, r, g);
                objective.push(value);
                continue 'outer;
            }
            lr *= 0.5;
        }
        break;
    }
    let mask = select_top(&lambdas, cfg.sparsity, Provenance::Dgr)?;
    Ok((GateVector { lambdas, gamma: cfg.gamma, objective }, mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Dense, Layer, Shape};

    fn identity_net() -> Network {
        Network::new(
            Shape::flat(1),
            vec![Layer::Dense(Dense::new(1, 1, vec![1.0], vec![0.0])), Layer::Relu, Layer::Dense(Dense::new(1, 1, vec![1.0], vec![0.0]))],
        )
        .unwrap()
    }

    #[test]
    fn single_gate_converges_to_closed_form() {
        let net = identity_net();
        let cfg = DgrConfig { gamma: 1.0, iterations: 500, learning_rate: 0.1, sparsity: 0.0, ..DgrConfig::default() };
        let (gates, _) = dgr_optimize(&net, &[1.0], 0, &cfg).unwrap();
        assert!((gates.lambdas[0][0] - 0.5).abs() < 1e-3, "{:?}", gates.lambdas);
    }

    #[test]
    fn zero_iterations_keep_initial_gates() {
        let net = identity_net();
        let cfg = DgrConfig { gamma: 0.0, iterations: 0, sparsity: 0.0, ..DgrConfig::default() };
        let (gates, _) = dgr_optimize(&net, &[2.0], 0, &cfg).unwrap();
        assert_eq!(gates.lambdas, vec![vec![1.0]]);
        assert_eq!(gates.objective, vec![0.0]);
    }

    #[test]
    fn invalid_settings_rejected() {
        let net = identity_net();
        assert!(dgr_optimize(&net, &[1.0], 0, &DgrConfig { learning_rate: 0.0, ..DgrConfig::default() }).is_err());
        assert!(dgr_optimize(&net, &[1.0], 0, &DgrConfig { gamma: -1.0, ..DgrConfig::default() }).is_err());
        assert!(greedy_prune(&net, &[1.0], 0, 0.5, 0).is_err());
        assert!(greedy_prune(&net, &[1.0], 0, 1.0, 1).is_err());
    }

    #[test]
    fn default_chunk_is_one_percent() {
        assert_eq!(default_chunk(50), 1);
        assert_eq!(default_chunk(1000), 10);
    }
}
