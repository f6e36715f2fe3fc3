//! Pathway selection, frozen sub-networks and pathway statistics.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::contrib::{ContributionMap, ContributionMethod};
use crate::error::{Error, Result};
use crate::nn::{backward, forward_record, ActivationRecord, Directive, GradientRecord, InterceptSpec, Network, NeuronId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    NeuronMct,
    NeuronIntGrad,
    GreedyPruning,
    Dgr,
    ActiveSubnet,
    Manual,
}

impl From<ContributionMethod> for Provenance {
    fn from(m: ContributionMethod) -> Self {
        match m {
            ContributionMethod::NeuronMct => Provenance::NeuronMct,
            ContributionMethod::NeuronIntGrad => Provenance::NeuronIntGrad,
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::NeuronMct => "neuronmct",
            Provenance::NeuronIntGrad => "neuronintgrad",
            Provenance::GreedyPruning => "greedy",
            Provenance::Dgr => "dgr",
            Provenance::ActiveSubnet => "active",
            Provenance::Manual => "manual",
        })
    }
}

impl FromStr for Provenance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "neuronmct" => Provenance::NeuronMct,
            "neuronintgrad" => Provenance::NeuronIntGrad,
            "greedy" => Provenance::GreedyPruning,
            "dgr" => Provenance::Dgr,
            "active" => Provenance::ActiveSubnet,
            "manual" => Provenance::Manual,
            _ => return Err(Error::Parse(format!("unknown pathway provenance `{s}`"))),
        })
    }
}

/// Binary indicator over all hidden neurons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathwayMask {
    pub layers: Vec<Vec<bool>>,
    /// Requested fraction of neurons excluded.
    pub sparsity: f64,
    /// Score of the last kept neuron, when the pathway came from a ranking.
    pub threshold: Option<f64>,
    pub provenance: Provenance,
}

impl PathwayMask {
    pub fn full(widths: &[usize], provenance: Provenance) -> Self {
        Self { layers: widths.iter().map(|&w| vec![true; w]).collect(), sparsity: 0.0, threshold: None, provenance }
    }

    pub fn from_layers(layers: Vec<Vec<bool>>, provenance: Provenance) -> Self {
        let mut mask = Self { layers, sparsity: 0.0, threshold: None, provenance };
        mask.sparsity = mask.realized_sparsity();
        mask
    }

    pub fn contains(&self, id: NeuronId) -> bool {
        self.layers.get(id.layer).and_then(|l| l.get(id.unit)).copied().unwrap_or(false)
    }

    pub fn widths(&self) -> Vec<usize> {
        self.layers.iter().map(Vec::len).collect()
    }

    pub fn num_neurons(&self) -> usize {
        self.layers.iter().map(Vec::len).sum()
    }

    pub fn kept_count(&self) -> usize {
        self.layers.iter().flatten().filter(|&&e| e).count()
    }

    pub fn realized_sparsity(&self) -> f64 {
        let n = self.num_neurons();
        if n == 0 {
            0.0
        } else {
            1.0 - self.kept_count() as f64 / n as f64
        }
    }

    /// False when the ranking threshold is zero, i.e. zero-score neurons may
    /// have been admitted by the tie-break.
    pub fn threshold_positive(&self) -> bool {
        self.threshold.is_none_or(|t| t > 0.0)
    }

    pub fn kept(&self) -> impl Iterator<Item = NeuronId> + '_ {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(l, v)| v.iter().enumerate().filter(|e| *e.1).map(move |(u, _)| NeuronId::new(l, u)))
    }

    pub fn is_subset_of(&self, other: &PathwayMask) -> bool {
        self.widths() == other.widths() && self.kept().all(|id| other.contains(id))
    }

    /// 0/1 gates for masking semantics m ⊙ a.
    pub fn gates(&self) -> Vec<Vec<f64>> {
        self.layers.iter().map(|l| l.iter().map(|&e| if e { 1.0 } else { 0.0 }).collect()).collect()
    }

    pub fn check_widths(&self, widths: &[usize]) -> Result<()> {
        if self.widths() != widths {
            return Err(Error::MaskShape(format!("mask widths {:?}, network widths {widths:?}", self.widths())));
        }
        Ok(())
    }

    /// Header lines followed by one `layer unit` line per kept neuron.
    pub fn to_sparse_text(&self, model_hash: &str) -> String {
        let widths: Vec<String> = self.widths().iter().map(usize::to_string).collect();
        let mut out = format!(
            "# pathgrad pathway\nmodel {model_hash}\nmethod {}\nsparsity {}\nthreshold {}\nwidths {}\nkept {}\n",
            self.provenance,
            self.sparsity,
            self.threshold.map_or("none".to_string(), |t| t.to_string()),
            widths.join(","),
            self.kept_count()
        );
        for id in self.kept() {
            out.push_str(&format!("{} {}\n", id.layer, id.unit));
        }
        out
    }

    /// Parses [`PathwayMask::to_sparse_text`] output; returns the mask and model hash.
    pub fn from_sparse_text(text: &str) -> Result<(Self, String)> {
        let bad = |msg: String| Error::Parse(format!("pathway file: {msg}"));
        let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty());
        let mut header = |key: &str| -> Result<String> {
            let line = lines.next().ok_or_else(|| bad(format!("missing `{key}`")))?;
            line.strip_prefix(key)
                .and_then(|r| r.strip_prefix(' '))
                .map(str::to_string)
                .ok_or_else(|| bad(format!("expected `{key}`, found `{line}`")))
        };
        let hash = header("model")?;
        let provenance: Provenance = header("method")?.parse()?;
        let sparsity: f64 = header("sparsity")?.parse().map_err(|_| bad("bad sparsity".into()))?;
        let threshold = match header("threshold")?.as_str() {
            "none" => None,
            t => Some(t.parse().map_err(|_| bad(format!("bad threshold `{t}`")))?),
        };
        let widths: Vec<usize> = header("widths")?
            .split(',')
            .filter(|w| !w.is_empty())
            .map(|w| w.parse().map_err(|_| bad(format!("bad width `{w}`"))))
            .collect::<Result<_>>()?;
        let kept: usize = header("kept")?.parse().map_err(|_| bad("bad kept count".into()))?;
        let mut layers: Vec<Vec<bool>> = widths.iter().map(|&w| vec![false; w]).collect();
        let mut count = 0;
        for line in lines {
            let mut it = line.split_whitespace().map(str::parse::<usize>);
            let (Some(Ok(l)), Some(Ok(u)), None) = (it.next(), it.next(), it.next()) else {
                return Err(bad(format!("bad neuron line `{line}`")));
            };
            let slot = layers.get_mut(l).and_then(|v| v.get_mut(u)).ok_or_else(|| bad(format!("neuron {l}:{u} out of range")))?;
            *slot = true;
            count += 1;
        }
        if count != kept {
            return Err(bad(format!("header says {kept} kept neurons, found {count}")));
        }
        Ok((Self { layers, sparsity, threshold, provenance }, hash))
    }
}

/// Number of neurons kept at sparsity κ: round((1−κ)·N), at least one.
pub fn kept_target(n: usize, sparsity: f64) -> usize {
    (((1.0 - sparsity) * n as f64).round() as usize).clamp(1.min(n), n)
}

fn check_sparsity(sparsity: f64) -> Result<()> {
    if !(0.0..1.0).contains(&sparsity) {
        return Err(Error::InvalidParameter(format!("sparsity {sparsity} outside [0, 1)")));
    }
    Ok(())
}

/// Keeps the top-scoring neurons network-wide; ties go to the lower (layer, unit).
pub fn select_top(scores: &[Vec<f64>], sparsity: f64, provenance: Provenance) -> Result<PathwayMask> {
    check_sparsity(sparsity)?;
    let mut ids: Vec<(NeuronId, f64)> = scores
        .iter()
        .enumerate()
        .flat_map(|(l, v)| v.iter().enumerate().map(move |(u, &c)| (NeuronId::new(l, u), c)))
        .collect();
    if let Some((id, _)) = ids.iter().find(|(_, c)| c.is_nan()) {
        return Err(Error::InvalidParameter(format!("score of neuron {id} is NaN")));
    }
    ids.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let k = kept_target(ids.len(), sparsity);
    let mut layers: Vec<Vec<bool>> = scores.iter().map(|v| vec![false; v.len()]).collect();
    for (id, _) in &ids[..k] {
        layers[id.layer][id.unit] = true;
    }
    let threshold = k.checked_sub(1).map(|i| ids[i].1);
    Ok(PathwayMask { layers, sparsity, threshold, provenance })
}

/// Pathway of the top (1−κ)·N neurons by contribution.
pub fn select_pathway(c: &ContributionMap, sparsity: f64) -> Result<PathwayMask> {
    if c.values.iter().flatten().all(|&v| v == 0.0) {
        return Err(Error::AllZeroContributions);
    }
    select_top(&c.values, sparsity, c.method.into())
}

/// Neurons with positive activation in the record.
pub fn active_subnet(record: &ActivationRecord) -> PathwayMask {
    PathwayMask::from_layers(
        record.activations.iter().map(|l| l.iter().map(|&a| a > 0.0).collect()).collect(),
        Provenance::ActiveSubnet,
    )
}

/// A network whose neurons outside a pathway are held at their recorded
/// activations, making it affine in the pathway's inputs near the reference.
#[derive(Debug, Clone)]
pub struct FrozenNetwork<'a> {
    net: &'a Network,
    reference: ActivationRecord,
    mask: PathwayMask,
    intercept: InterceptSpec,
}

pub fn build_frozen<'a>(net: &'a Network, record: &ActivationRecord, mask: &PathwayMask) -> Result<FrozenNetwork<'a>> {
    if record.network_version() != net.version() {
        return Err(Error::StaleRecord { record: record.network_version(), current: net.version() });
    }
    if record.intercept().is_some() {
        return Err(Error::InvalidParameter("reference record must come from the unmodified network".into()));
    }
    mask.check_widths(&net.hidden_widths())?;
    let mut intercept = InterceptSpec::pass_through(net);
    for id in net.neurons() {
        if !mask.contains(id) {
            intercept.set(id, Directive::Freeze(record.activation(id)))?;
        }
    }
    Ok(FrozenNetwork { net, reference: record.clone(), mask: mask.clone(), intercept })
}

impl<'a> FrozenNetwork<'a> {
    pub fn network(&self) -> &'a Network {
        self.net
    }

    pub fn reference(&self) -> &ActivationRecord {
        &self.reference
    }

    pub fn mask(&self) -> &PathwayMask {
        &self.mask
    }

    pub fn intercept(&self) -> &InterceptSpec {
        &self.intercept
    }

    pub fn class_index(&self) -> usize {
        self.reference.class_index
    }

    pub fn forward(&self, x: &[f64]) -> Result<ActivationRecord> {
        forward_record(self.net, x, Some(&self.intercept), self.reference.class_index)
    }

    pub fn response(&self, x: &[f64]) -> Result<f64> {
        self.forward(x).map(|r| r.output)
    }

    pub fn gradients(&self, x: &[f64]) -> Result<GradientRecord> {
        let rec = self.forward(x)?;
        backward(self.net, &rec, Some(&self.intercept))
    }

    /// ∇_x Φ̂ at `x`.
    pub fn input_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.gradients(x).map(|g| g.input_grad)
    }
}

/// Forward pass with neurons outside the mask zeroed (m ⊙ a).
pub fn masked_record(net: &Network, x: &[f64], mask: &PathwayMask, class_index: usize) -> Result<ActivationRecord> {
    mask.check_widths(&net.hidden_widths())?;
    let spec = InterceptSpec::from_gates(net, &mask.gates())?;
    forward_record(net, x, Some(&spec), class_index)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeadFraction {
    /// Share of pathway neurons that were dead in the original forward pass.
    pub originally_dead: f64,
    /// Share of pathway neurons that were originally dead and are active in
    /// the current record.
    pub originally_dead_now_active: Option<f64>,
}

pub fn dead_fraction(
    mask: &PathwayMask,
    original: &ActivationRecord,
    current: Option<&ActivationRecord>,
) -> Result<DeadFraction> {
    let widths: Vec<usize> = original.activations.iter().map(Vec::len).collect();
    mask.check_widths(&widths)?;
    if let Some(cur) = current {
        if cur.activations.iter().map(Vec::len).ne(widths.iter().copied()) {
            return Err(Error::MaskShape("current record does not match the original".into()));
        }
    }
    let kept = mask.kept_count();
    if kept == 0 {
        return Err(Error::EmptyPathway);
    }
    let (mut dead, mut revived) = (0usize, 0usize);
    for id in mask.kept() {
        if original.activation(id) <= 0.0 {
            dead += 1;
            if current.is_some_and(|c| c.activation(id) > 0.0) {
                revived += 1;
            }
        }
    }
    Ok(DeadFraction {
        originally_dead: dead as f64 / kept as f64,
        originally_dead_now_active: current.map(|_| revived as f64 / kept as f64),
    })
}

fn jaccard_counts<'b>(pairs: impl Iterator<Item = (&'b bool, &'b bool)>) -> f64 {
    let (mut inter, mut union) = (0usize, 0usize);
    for (&a, &b) in pairs {
        inter += (a && b) as usize;
        union += (a || b) as usize;
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// |e1 ∧ e2| / |e1 ∨ e2| over all neurons; 1.0 when both are empty.
pub fn jaccard(a: &PathwayMask, b: &PathwayMask) -> Result<f64> {
    a.check_widths(&b.widths())?;
    Ok(jaccard_counts(a.layers.iter().flatten().zip(b.layers.iter().flatten())))
}

pub fn jaccard_per_layer(a: &PathwayMask, b: &PathwayMask) -> Result<Vec<f64>> {
    a.check_widths(&b.widths())?;
    Ok(a.layers.iter().zip(&b.layers).map(|(x, y)| jaccard_counts(x.iter().zip(y))).collect())
}
