use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{perturb_pixels, rank_descending, Dataset, Fill};
use crate::error::{Error, Result};
use crate::eval::{auc, Attributor};
use crate::nn::{forward_record, ArchSpec, Network};
use crate::train::{evaluate, train, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoarConfig {
    /// Percent of pixel sites removed, most relevant first.
    pub percentiles: Vec<f64>,
    pub seeds: Vec<u64>,
    pub train: TrainConfig,
}

impl Default for RoarConfig {
    fn default() -> Self {
        Self { percentiles: vec![10.0, 30.0, 50.0, 70.0, 90.0], seeds: vec![0, 1, 2], train: TrainConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoarPoint {
    pub percentile: f64,
    /// Test accuracy per seed; `None` when that retraining diverged.
    pub accuracies: Vec<Option<f64>>,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub flagged: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoarResult {
    pub method: String,
    pub points: Vec<RoarPoint>,
    /// Trapezoid area of mean accuracy over the percentile axis scaled to [0, 1].
    pub auc: f64,
}

impl RoarResult {
    pub fn point(&self, percentile: f64) -> Option<&RoarPoint> {
        self.points.iter().find(|p| p.percentile == percentile)
    }

    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "percentile,seed_index,accuracy")?;
        for p in &self.points {
            for (i, a) in p.accuracies.iter().enumerate() {
                match a {
                    Some(a) => writeln!(out, "{},{i},{a}", p.percentile)?,
                    None => writeln!(out, "{},{i},diverged", p.percentile)?,
                }
            }
        }
        Ok(())
    }
}

fn rankings(net: &Network, ds: &Dataset, attributor: &dyn Attributor) -> Result<Vec<Vec<usize>>> {
    ds.inputs
        .par_iter()
        .map(|x| {
            let class = forward_record(net, x, None, 0)?.predicted_class();
            Ok(rank_descending(&attributor.attribute(net, x, class)?.reduced))
        })
        .collect()
}

fn degrade(ds: &Dataset, ranks: &[Vec<usize>], fraction: f64, fill: &Fill) -> Result<Dataset> {
    let inputs = ds
        .inputs
        .iter()
        .zip(ranks)
        .map(|(x, r)| perturb_pixels(x, ds.shape, r, fraction, fill))
        .collect::<Result<_>>()?;
    Ok(ds.with_inputs(inputs))
}

/// Remove-and-retrain: for each percentile, the top-ranked sites of every
/// train and test image are replaced by the training channel means and a
/// fresh network is trained once per seed.
pub fn roar_run(
    arch: &ArchSpec,
    train_set: &Dataset,
    test_set: &Dataset,
    reference: &Network,
    attributor: &dyn Attributor,
    cfg: &RoarConfig,
) -> Result<RoarResult> {
    if cfg.seeds.is_empty() || cfg.percentiles.is_empty() {
        return Err(Error::InvalidParameter("ROAR needs at least one seed and one percentile".into()));
    }
    if let Some(p) = cfg.percentiles.iter().find(|p| !(0.0..=100.0).contains(*p)) {
        return Err(Error::InvalidParameter(format!("percentile {p} outside [0, 100]")));
    }
    let fill = Fill::ChannelMeans(train_set.channel_means.clone());
    let train_ranks = rankings(reference, train_set, attributor)?;
    let test_ranks = rankings(reference, test_set, attributor)?;
    let sets: Vec<(Dataset, Dataset)> = cfg
        .percentiles
        .iter()
        .map(|p| {
            let t = p / 100.0;
            Ok((degrade(train_set, &train_ranks, t, &fill)?, degrade(test_set, &test_ranks, t, &fill)?))
        })
        .collect::<Result<_>>()?;
    let cells: Vec<(usize, u64)> =
        (0..cfg.percentiles.len()).flat_map(|p| cfg.seeds.iter().map(move |&s| (p, s))).collect();
    let outcomes: Vec<std::result::Result<f64, String>> = cells
        .par_iter()
        .map(|&(p, seed)| {
            let (tr, te) = &sets[p];
            let run = train(arch, tr, &TrainConfig { seed, ..cfg.train.clone() });
            match run {
                Ok(out) => evaluate(&out.network, te).map(|e| e.accuracy).map_err(|e| e.to_string()),
                Err(e @ Error::Diverged { .. }) => Err(e.to_string()),
                Err(e) => Err(format!("fatal: {e}")),
            }
        })
        .collect();
    if let Some(Err(msg)) = outcomes.iter().find(|o| matches!(o, Err(m) if m.starts_with("fatal: "))) {
        return Err(Error::InvalidParameter(msg.trim_start_matches("fatal: ").to_string()));
    }
    let mut points = Vec::with_capacity(cfg.percentiles.len());
    for (pi, &percentile) in cfg.percentiles.iter().enumerate() {
        let slice = &outcomes[pi * cfg.seeds.len()..(pi + 1) * cfg.seeds.len()];
        let accuracies: Vec<Option<f64>> = slice.iter().map(|o| o.as_ref().ok().copied()).collect();
        let flagged: Vec<String> = slice.iter().filter_map(|o| o.as_ref().err().cloned()).collect();
        let ok: Vec<f64> = accuracies.iter().flatten().copied().collect();
        let (mean, std) = if ok.is_empty() {
            (None, None)
        } else {
            let m = ok.iter().sum::<f64>() / ok.len() as f64;
            let v = ok.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / ok.len() as f64;
            (Some(m), Some(v.sqrt()))
        };
        points.push(RoarPoint { percentile, accuracies, mean, std, flagged });
    }
    let valid: Vec<&RoarPoint> = points.iter().filter(|p| p.mean.is_some()).collect();
    let xs: Vec<f64> = valid.iter().map(|p| p.percentile / 100.0).collect();
    let ys: Vec<f64> = valid.iter().map(|p| p.mean.unwrap_or_default()).collect();
    Ok(RoarResult { method: attributor.name(), auc: auc(&xs, &ys)?, points })
}
