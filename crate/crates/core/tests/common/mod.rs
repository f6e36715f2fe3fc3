#![allow(dead_code)]

use pathgrad::nn::{ArchSpec, Dense, Layer};
use pathgrad::{Network, Shape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random MLP with the given widths, including input and output.
pub fn random_mlp(widths: &[usize], seed: u64) -> Network {
    let arch = ArchSpec::mlp(Shape::flat(widths[0]), &widths[1..widths.len() - 1], widths[widths.len() - 1]);
    arch.build_random(&mut rng(seed)).unwrap()
}

pub fn random_input(len: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn dense(inputs: usize, outputs: usize, weights: &[f64], bias: &[f64]) -> Layer {
    Layer::Dense(Dense::new(inputs, outputs, weights.to_vec(), bias.to_vec()))
}

/// u = ReLU(x), v = ReLU(2x); p = ReLU(−2u + 1), q = ReLU(0.5u + v); Φ = p + q.
pub fn pruning_counterexample() -> Network {
    Network::new(
        Shape::flat(1),
        vec![
            dense(1, 2, &[1.0, 2.0], &[0.0, 0.0]),
            Layer::Relu,
            dense(2, 2, &[-2.0, 0.0, 0.5, 1.0], &[1.0, 0.0]),
            Layer::Relu,
            dense(2, 1, &[1.0, 1.0], &[0.0]),
        ],
    )
    .unwrap()
}

/// Central differences of `f` at `x` with step `h`.
pub fn finite_diff(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let (mut p, mut m) = (x.to_vec(), x.to_vec());
            p[i] += h;
            m[i] -= h;
            (f(&p) - f(&m)) / (2.0 * h)
        })
        .collect()
}
