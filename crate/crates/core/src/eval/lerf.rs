use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{perturb_pixels, rank_ascending, Dataset, Fill};
use crate::error::{Error, Result};
use crate::eval::{auc, Attributor};
use crate::nn::{forward_record, response, Network};

/// Replacement used when a pixel site is removed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemovalFill {
    /// Per-channel mean of the training split.
    #[default]
    ChannelMean,
    Zero,
    /// The pixel's own value: removal is a no-op.
    Own,
}

impl RemovalFill {
    pub(crate) fn fill(self, ds: &Dataset, x: &[f64]) -> Fill {
        match self {
            RemovalFill::ChannelMean => Fill::ChannelMeans(ds.channel_means.clone()),
            RemovalFill::Zero => Fill::Zero,
            RemovalFill::Own => Fill::Image(x.to_vec()),
        }
    }
}

pub fn default_fractions() -> Vec<f64> {
    (0..=10).map(|k| k as f64 / 10.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegradationCurve {
    pub method: String,
    pub fractions: Vec<f64>,
    /// Mean |ΔΦ| / |Φ| per fraction.
    pub values: Vec<f64>,
    pub auc: f64,
    /// Area under each input's own curve, in dataset order (skipped inputs omitted).
    pub per_input_auc: Vec<f64>,
    pub inputs: usize,
    /// Inputs skipped because Φ(x) = 0.
    pub skipped: usize,
}

impl DegradationCurve {
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "fraction,value")?;
        for (t, v) in self.fractions.iter().zip(&self.values) {
            writeln!(out, "{t},{v}")?;
        }
        Ok(())
    }
}

/// Least-relevant-first degradation: sites are removed in ascending order of
/// the reduced attribution map (computed once on the intact network), and
/// the relative output change of the unmodified network is averaged.
pub fn lerf_curve(
    net: &Network,
    dataset: &Dataset,
    attributor: &dyn Attributor,
    fill: RemovalFill,
    fractions: &[f64],
) -> Result<DegradationCurve> {
    if dataset.is_empty() {
        return Err(Error::Dataset("LeRF needs at least one input".into()));
    }
    if fractions.is_empty() || fractions.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(Error::InvalidParameter("fractions must be non-empty and within [0, 1]".into()));
    }
    let per_input: Vec<Option<Vec<f64>>> = dataset
        .inputs
        .par_iter()
        .map(|x| {
            let rec = forward_record(net, x, None, 0)?;
            let class = rec.predicted_class();
            let phi = rec.logits[class];
            if phi == 0.0 {
                return Ok(None);
            }
            let map = attributor.attribute(net, x, class)?;
            let ranking = rank_ascending(&map.reduced);
            let fill = fill.fill(dataset, x);
            fractions
                .iter()
                .map(|&t| {
                    let xt = perturb_pixels(x, dataset.shape, &ranking, t, &fill)?;
                    Ok((response(net, &xt, None, class)? - phi).abs() / phi.abs())
                })
                .collect::<Result<Vec<f64>>>()
                .map(Some)
        })
        .collect::<Result<_>>()?;
    let curves: Vec<&Vec<f64>> = per_input.iter().flatten().collect();
    let skipped = per_input.len() - curves.len();
    if curves.is_empty() {
        return Err(Error::Dataset("every input has a zero response".into()));
    }
    let values: Vec<f64> =
        (0..fractions.len()).map(|k| curves.iter().map(|c| c[k]).sum::<f64>() / curves.len() as f64).collect();
    let per_input_auc = curves.iter().map(|c| auc(fractions, c)).collect::<Result<_>>()?;
    Ok(DegradationCurve {
        method: attributor.name(),
        fractions: fractions.to_vec(),
        auc: auc(fractions, &values)?,
        values,
        per_input_auc,
        inputs: curves.len(),
        skipped,
    })
}
