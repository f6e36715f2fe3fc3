use crate::error::{Error, Result};
use crate::nn::{Network, NeuronId};

/// What happens to a hidden neuron's activation on its way downstream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Directive {
    Pass,
    /// Multiply the activation by a non-negative gate; gradients are scaled alike.
    Gate(f64),
    /// Replace the activation by a constant; no gradient flows through it.
    Freeze(f64),
}

impl Directive {
    pub fn apply(self, activation: f64) -> f64 {
        match self {
            Directive::Pass => activation,
            Directive::Gate(g) => g * activation,
            Directive::Freeze(v) => v,
        }
    }
}

/// Per-neuron directives for every hidden layer of a network.
#[derive(Debug, Clone, PartialEq)]
pub struct InterceptSpec {
    layers: Vec<Vec<Directive>>,
}

impl InterceptSpec {
    pub fn pass_through(net: &Network) -> Self {
        Self { layers: net.hidden_widths().into_iter().map(|w| vec![Directive::Pass; w]).collect() }
    }

    /// Gate every neuron of one hidden layer by `alpha`.
    pub fn gate_layer(net: &Network, layer: usize, alpha: f64) -> Result<Self> {
        let mut spec = Self::pass_through(net);
        let units = spec.layers.get_mut(layer).ok_or(Error::NeuronOutOfRange(NeuronId::new(layer, 0)))?;
        units.fill(Directive::Gate(alpha));
        spec.validate(net)?;
        Ok(spec)
    }

    /// Gates given per hidden layer (e.g. a binary mask as 0/1 values).
    pub fn from_gates(net: &Network, gates: &[Vec<f64>]) -> Result<Self> {
        let spec = Self { layers: gates.iter().map(|l| l.iter().map(|&g| Directive::Gate(g)).collect()).collect() };
        spec.validate(net)?;
        Ok(spec)
    }

    pub fn set(&mut self, id: NeuronId, directive: Directive) -> Result<()> {
        let slot = self
            .layers
            .get_mut(id.layer)
            .and_then(|l| l.get_mut(id.unit))
            .ok_or(Error::NeuronOutOfRange(id))?;
        check_directive(id, directive)?;
        *slot = directive;
        Ok(())
    }

    pub fn get(&self, id: NeuronId) -> Option<Directive> {
        self.layers.get(id.layer).and_then(|l| l.get(id.unit)).copied()
    }

    pub fn layer(&self, layer: usize) -> &[Directive] {
        &self.layers[layer]
    }

    pub fn validate(&self, net: &Network) -> Result<()> {
        let widths = net.hidden_widths();
        if widths.len() != self.layers.len() {
            return Err(Error::MaskShape(format!(
                "intercept covers {} hidden layers, network has {}",
                self.layers.len(),
                widths.len()
            )));
        }
        for (l, (units, &w)) in self.layers.iter().zip(&widths).enumerate() {
            if units.len() != w {
                return Err(Error::MaskShape(format!("intercept layer {l} has {} units, expected {w}", units.len())));
            }
            for (u, &d) in units.iter().enumerate() {
                check_directive(NeuronId::new(l, u), d)?;
            }
        }
        Ok(())
    }
}

fn check_directive(id: NeuronId, d: Directive) -> Result<()> {
    match d {
        Directive::Gate(g) if !(g >= 0.0 && g.is_finite()) => {
            Err(Error::Intercept { neuron: id, detail: format!("gate {g} must be finite and non-negative") })
        }
        Directive::Freeze(v) if !v.is_finite() => {
            Err(Error::Intercept { neuron: id, detail: format!("frozen value {v} is not finite") })
        }
        _ => Ok(()),
    }
}
