//! Fixtures shared by the benchmarks.

use pathgrad::data::{gen_synthetic, Dataset};
use pathgrad::nn::ArchSpec;
use pathgrad::{Network, Shape};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const GLYPH_ARCH: &str = "conv:4:3,relu,pool:2,flatten,dense:16,relu,dense:10";

/// Untrained glyph conv net and a handful of glyph inputs.
pub fn glyph_fixture() -> (Network, Dataset) {
    let data = gen_synthetic("glyphs".parse().expect("known kind"), 32, 0).expect("synthetic data");
    let net = ArchSpec::parse(data.shape, GLYPH_ARCH)
        .and_then(|a| a.build_random(&mut ChaCha8Rng::seed_from_u64(0)))
        .expect("valid architecture");
    (net, data)
}

/// Random MLP on flat inputs.
pub fn mlp(inputs: usize, hidden: &[usize], classes: usize, seed: u64) -> Network {
    ArchSpec::mlp(Shape::flat(inputs), hidden, classes)
        .build_random(&mut ChaCha8Rng::seed_from_u64(seed))
        .expect("valid architecture")
}
