//! Mini-batch SGD for desk-scale networks.
//!
//! A run is fully determined by its config: the seed drives both parameter
//! initialization and the per-epoch sample order. Per-sample gradients are
//! computed in parallel but summed in sample order, so results do not depend
//! on the thread count.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{accumulate_param_grads, argmax, forward_record, ArchSpec, Network, ParamGrads};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    Momentum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    CrossEntropy,
    MeanSquared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub loss: Loss,
    /// L2 penalty on weights (not biases), added to the gradient as `decay * w`.
    #[serde(default)]
    pub weight_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: Optimizer::Momentum,
            learning_rate: 0.05,
            momentum: 0.9,
            epochs: 20,
            batch_size: 32,
            seed: 0,
            loss: Loss::CrossEntropy,
            weight_decay: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: Network,
    pub trace: Vec<EpochMetrics>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub mean_loss: f64,
}

/// Loss value and its gradient with respect to the logits.
pub fn loss_and_grad(loss: Loss, logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    match loss {
        Loss::CrossEntropy => {
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
            let sum: f64 = exps.iter().sum();
            let grad: Vec<f64> =
                exps.iter().enumerate().map(|(i, e)| e / sum - if i == label { 1.0 } else { 0.0 }).collect();
            (sum.ln() + max - logits[label], grad)
        }
        Loss::MeanSquared => {
            let k = logits.len() as f64;
            let mut value = 0.0;
            let grad = logits
                .iter()
                .enumerate()
                .map(|(i, &l)| {
                    let d = l - if i == label { 1.0 } else { 0.0 };
                    value += d * d;
                    2.0 * d / k
                })
                .collect();
            (value / k, grad)
        }
    }
}

/// Trains a freshly initialized network of the given architecture.
pub fn train(arch: &ArchSpec, dataset: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    if arch.input_shape != dataset.shape {
        return Err(Error::Dataset(format!("architecture expects {}, dataset is {}", arch.input_shape, dataset.shape)));
    }
    let net = arch.build_random(&mut ChaCha8Rng::seed_from_u64(cfg.seed))?;
    train_from(net, dataset, cfg)
}

/// Continues training from the given parameters.
pub fn train_from(mut net: Network, dataset: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    if dataset.is_empty() {
        return Err(Error::Dataset("cannot train on an empty dataset".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::InvalidParameter("batch size must be positive".into()));
    }
    if !(cfg.learning_rate >= 0.0 && cfg.learning_rate.is_finite()) {
        return Err(Error::InvalidParameter(format!("learning rate {} must be finite and >= 0", cfg.learning_rate)));
    }
    if dataset.num_classes > net.num_classes() {
        return Err(Error::Dataset(format!(
            "dataset has {} classes, network only {}",
            dataset.num_classes,
            net.num_classes()
        )));
    }
    let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5e_ed0f_0de5);
    let mut velocity = ParamGrads::zeros(&net);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut order_rng);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for (batch, idx) in order.chunks(cfg.batch_size).enumerate() {
            let per_sample: Vec<(f64, bool, ParamGrads)> = idx
                .par_iter()
                .map(|&i| -> Result<_> {
                    let label = dataset.labels[i];
                    let rec = forward_record(&net, &dataset.inputs[i], None, label)?;
                    let (l, g) = loss_and_grad(cfg.loss, &rec.logits, label);
                    let mut grads = ParamGrads::zeros(&net);
                    accumulate_param_grads(&net, &rec, &g, &mut grads)?;
                    Ok((l, argmax(&rec.logits) == label, grads))
                })
                .collect::<Result<_>>()?;
            let mut grads = ParamGrads::zeros(&net);
            let mut batch_loss = 0.0;
            for (l, ok, g) in &per_sample {
                batch_loss += l;
                correct += *ok as usize;
                grads.add(g);
            }
            if !batch_loss.is_finite() {
                return Err(Error::Diverged { epoch, batch, loss: batch_loss / idx.len() as f64 });
            }
            loss_sum += batch_loss;
            grads.scale(1.0 / idx.len() as f64);
            if cfg.weight_decay != 0.0 {
                add_weight_decay(&net, &mut grads, cfg.weight_decay);
            }
            apply_update(&mut net, &grads, &mut velocity, cfg);
        }
        trace.push(EpochMetrics {
            epoch,
            loss: loss_sum / dataset.len() as f64,
            accuracy: correct as f64 / dataset.len() as f64,
        });
    }
    net.round_to_f32();
    Ok(TrainOutcome { network: net, trace })
}

fn add_weight_decay(net: &Network, grads: &mut ParamGrads, decay: f64) {
    for (layer, g) in net.layers().iter().zip(grads.layers.iter_mut()) {
        if let (Some((w, _)), Some((gw, _))) = (layer.params(), g) {
            gw.iter_mut().zip(w).for_each(|(g, w)| *g += decay * w);
        }
    }
}

fn apply_update(net: &mut Network, grads: &ParamGrads, velocity: &mut ParamGrads, cfg: &TrainConfig) {
    let lr = cfg.learning_rate;
    if cfg.optimizer == Optimizer::Momentum {
        for (v, g) in velocity.layers.iter_mut().zip(&grads.layers) {
            if let (Some((vw, vb)), Some((gw, gb))) = (v, g) {
                vw.iter_mut().zip(gw).for_each(|(v, g)| *v = cfg.momentum * *v + g);
                vb.iter_mut().zip(gb).for_each(|(v, g)| *v = cfg.momentum * *v + g);
            }
        }
    }
    let step = if cfg.optimizer == Optimizer::Momentum { &*velocity } else { grads };
    net.update_params(|k, w, b| {
        if let Some((sw, sb)) = &step.layers[k] {
            w.iter_mut().zip(sw).for_each(|(p, s)| *p -= lr * s);
            b.iter_mut().zip(sb).for_each(|(p, s)| *p -= lr * s);
        }
    });
}

/// Accuracy and mean cross-entropy over a dataset.
pub fn evaluate(net: &Network, dataset: &Dataset) -> Result<Evaluation> {
    evaluate_with(net, dataset, Loss::CrossEntropy)
}

pub fn evaluate_with(net: &Network, dataset: &Dataset, loss: Loss) -> Result<Evaluation> {
    if dataset.is_empty() {
        return Err(Error::Dataset("cannot evaluate on an empty dataset".into()));
    }
    let results: Vec<(f64, bool)> = dataset
        .inputs
        .par_iter()
        .zip(&dataset.labels)
        .map(|(x, &label)| {
            let rec = forward_record(net, x, None, label)?;
            Ok((loss_and_grad(loss, &rec.logits, label).0, argmax(&rec.logits) == label))
        })
        .collect::<Result<_>>()?;
    let n = dataset.len() as f64;
    Ok(Evaluation {
        accuracy: results.iter().filter(|r| r.1).count() as f64 / n,
        mean_loss: results.iter().map(|r| r.0).sum::<f64>() / n,
    })
}

/// Writes `epoch,loss,accuracy` rows.
pub fn write_metrics_csv(trace: &[EpochMetrics], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "epoch,loss,accuracy")?;
    for m in trace {
        writeln!(out, "{},{},{}", m.epoch, m.loss, m.accuracy)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_synthetic, SyntheticKind};
    use crate::nn::Shape;

    fn xor_cfg(epochs: usize) -> TrainConfig {
        TrainConfig { epochs, batch_size: 8, learning_rate: 0.1, seed: 3, ..TrainConfig::default() }
    }

    #[test]
    fn zero_learning_rate_leaves_weights_unchanged() {
        let ds = gen_synthetic(SyntheticKind::Xor, 40, 0).unwrap();
        let arch = ArchSpec::mlp(Shape::new(1, 1, 2), &[8], 2);
        let init = arch.build_random(&mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let out = train(&arch, &ds, &TrainConfig { learning_rate: 0.0, ..xor_cfg(5) }).unwrap();
        assert_eq!(out.network, init);
    }

    #[test]
    fn xor_is_learned() {
        let ds = gen_synthetic(SyntheticKind::Xor, 64, 0).unwrap();
        let arch = ArchSpec::mlp(Shape::new(1, 1, 2), &[8], 2);
        let out = train(&arch, &ds, &xor_cfg(2000)).unwrap();
        assert_eq!(evaluate(&out.network, &ds).unwrap().accuracy, 1.0);
        assert!(out.trace.iter().all(|m| m.loss.is_finite()));
    }

    #[test]
    fn same_seed_same_weights() {
        let ds = gen_synthetic(SyntheticKind::Moons, 50, 0).unwrap();
        let arch = ArchSpec::mlp(Shape::new(1, 1, 2), &[6, 6], 2);
        let a = train(&arch, &ds, &xor_cfg(3)).unwrap().network;
        let b = train(&arch, &ds, &xor_cfg(3)).unwrap().network;
        assert_eq!(a.content_hash(), b.content_hash());
    }

    #[test]
    fn divergence_is_reported() {
        let ds = gen_synthetic(SyntheticKind::Moons, 50, 0).unwrap();
        let arch = ArchSpec::mlp(Shape::new(1, 1, 2), &[6], 2);
        let cfg = TrainConfig { learning_rate: 1e200, loss: Loss::MeanSquared, ..xor_cfg(50) };
        assert!(matches!(train(&arch, &ds, &cfg), Err(Error::Diverged { .. })));
    }

    #[test]
    fn weight_decay_touches_weights_only() {
        let arch = ArchSpec::mlp(Shape::new(1, 1, 2), &[3], 2);
        let net = arch.build_random(&mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let mut grads = ParamGrads::zeros(&net);
        add_weight_decay(&net, &mut grads, 0.5);
        for (layer, g) in net.layers().iter().zip(&grads.layers) {
            if let (Some((w, _)), Some((gw, gb))) = (layer.params(), g) {
                assert!(gw.iter().zip(w).all(|(g, w)| *g == 0.5 * w));
                assert!(gb.iter().all(|&g| g == 0.0));
            }
        }
    }

    #[test]
    fn cross_entropy_gradient_matches_finite_differences() {
        let logits = [0.3, -1.2, 2.0];
        let (_, g) = loss_and_grad(Loss::CrossEntropy, &logits, 1);
        for i in 0..3 {
            let mut p = logits;
            let mut m = logits;
            p[i] += 1e-6;
            m[i] -= 1e-6;
            let fd = (loss_and_grad(Loss::CrossEntropy, &p, 1).0 - loss_and_grad(Loss::CrossEntropy, &m, 1).0) / 2e-6;
            assert!((fd - g[i]).abs() < 1e-8);
        }
    }
}
