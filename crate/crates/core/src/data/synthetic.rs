use std::fmt;
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::Shape;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SyntheticKind {
    /// Two interleaved half circles in 2-D.
    Moons,
    /// Four jittered corners of the unit square, label = x0 xor x1.
    Xor,
    /// `side x side` images of uniform noise where `informative` fixed pixel
    /// sites alone carry the binary label.
    InformativePixels { side: usize, informative: usize },
    /// Ten seven-segment digit glyphs on a `side x side` canvas with jitter and noise.
    Glyphs { side: usize },
}

impl fmt::Display for SyntheticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SyntheticKind::Moons => f.write_str("moons"),
            SyntheticKind::Xor => f.write_str("xor"),
            SyntheticKind::InformativePixels { side, informative } => write!(f, "informative:{side}:{informative}"),
            SyntheticKind::Glyphs { side } => write!(f, "glyphs:{side}"),
        }
    }
}

impl FromStr for SyntheticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |i: usize, default: usize| -> Result<usize> {
            match parts.get(i) {
                None => Ok(default),
                Some(p) => p.parse().map_err(|_| Error::Parse(format!("`{s}`: `{p}` is not an integer"))),
            }
        };
        match parts[0] {
            "moons" => Ok(SyntheticKind::Moons),
            "xor" => Ok(SyntheticKind::Xor),
            "informative" => Ok(SyntheticKind::InformativePixels { side: num(1, 4)?, informative: num(2, 2)? }),
            "glyphs" => Ok(SyntheticKind::Glyphs { side: num(1, 12)? }),
            other => Err(Error::Parse(format!("unknown synthetic dataset `{other}`"))),
        }
    }
}

/// Deterministic synthetic dataset; classes are balanced to within one sample.
pub fn gen_synthetic(kind: SyntheticKind, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::Dataset("sample count must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (shape, classes) = match kind {
        SyntheticKind::Moons | SyntheticKind::Xor => (Shape::new(1, 1, 2), 2),
        SyntheticKind::InformativePixels { side, informative } => {
            if informative == 0 || informative > side * side {
                return Err(Error::Dataset(format!("cannot place {informative} informative pixels in {side}x{side}")));
            }
            (Shape::new(1, side, side), 2)
        }
        SyntheticKind::Glyphs { side } => {
            if side < 9 {
                return Err(Error::Dataset("glyph canvas must be at least 9x9".into()));
            }
            (Shape::new(1, side, side), 10)
        }
    };
    let mut labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    labels.shuffle(&mut rng);

    let mut informative_sites = None;
    let inputs: Vec<Vec<f64>> = match kind {
        SyntheticKind::Moons => {
            let noise = Normal::new(0.0, 0.1).expect("valid sigma");
            labels
                .iter()
                .map(|&l| {
                    let t = rng.random_range(0.0..std::f64::consts::PI);
                    let (x, y) = if l == 0 { (t.cos(), t.sin()) } else { (1.0 - t.cos(), 0.5 - t.sin()) };
                    vec![x + noise.sample(&mut rng), y + noise.sample(&mut rng)]
                })
                .collect()
        }
        SyntheticKind::Xor => {
            let noise = Normal::new(0.0, 0.05).expect("valid sigma");
            labels
                .iter()
                .map(|&l| {
                    let a = rng.random_bool(0.5);
                    let b = a ^ (l == 1);
                    vec![a as u8 as f64 + noise.sample(&mut rng), b as u8 as f64 + noise.sample(&mut rng)]
                })
                .collect()
        }
        SyntheticKind::InformativePixels { side, informative } => {
            let mut sites = index::sample(&mut rng, side * side, informative).into_vec();
            sites.sort_unstable();
            let out = labels
                .iter()
                .map(|&l| {
                    let mut x: Vec<f64> = (0..side * side).map(|_| rng.random_range(0.0..1.0)).collect();
                    for &s in &sites {
                        x[s] = if l == 1 { rng.random_range(0.6..1.0) } else { rng.random_range(0.0..0.4) };
                    }
                    x
                })
                .collect();
            informative_sites = Some(sites);
            out
        }
        SyntheticKind::Glyphs { side } => labels.iter().map(|&l| glyph(&mut rng, side, l)).collect(),
    };
    let mut ds = Dataset::new(kind.to_string(), shape, classes, inputs, labels)?;
    ds.informative = informative_sites;
    Ok(ds)
}

// Segments a..g of a seven-segment display.
const DIGIT_SEGMENTS: [&str; 10] = ["abcdef", "bc", "abged", "abgcd", "fgbc", "afgcd", "afgecd", "abc", "abcdefg", "abcdfg"];
const GLYPH_W: usize = 6;
const GLYPH_H: usize = 9;

fn glyph(rng: &mut ChaCha8Rng, side: usize, digit: usize) -> Vec<f64> {
    let oy = rng.random_range(0..=side - GLYPH_H);
    let ox = rng.random_range(0..=side - GLYPH_W);
    let ink = rng.random_range(0.7..1.0);
    let noise = Normal::new(0.0, 0.05).expect("valid sigma");
    let mut img = vec![0.0f64; side * side];
    let mut put = |y: usize, x: usize| img[(oy + y) * side + ox + x] = ink;
    let (mid, bot, right) = (GLYPH_H / 2, GLYPH_H - 1, GLYPH_W - 1);
    for seg in DIGIT_SEGMENTS[digit].chars() {
        match seg {
            'a' => (0..GLYPH_W).for_each(|x| put(0, x)),
            'g' => (0..GLYPH_W).for_each(|x| put(mid, x)),
            'd' => (0..GLYPH_W).for_each(|x| put(bot, x)),
            'f' => (0..=mid).for_each(|y| put(y, 0)),
            'b' => (0..=mid).for_each(|y| put(y, right)),
            'e' => (mid..=bot).for_each(|y| put(y, 0)),
            'c' => (mid..=bot).for_each(|y| put(y, right)),
            _ => unreachable!(),
        }
    }
    img.iter().map(|&v| (v + noise.sample(rng)).clamp(0.0, 1.0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_bytes() {
        for kind in ["moons", "xor", "informative", "glyphs"] {
            let k: SyntheticKind = kind.parse().unwrap();
            let a = gen_synthetic(k, 37, 5).unwrap();
            let b = gen_synthetic(k, 37, 5).unwrap();
            assert_eq!(a, b);
            assert_ne!(a.inputs, gen_synthetic(k, 37, 6).unwrap().inputs);
        }
    }

    #[test]
    fn classes_are_balanced() {
        for (kind, n) in [("moons", 101), ("glyphs", 95), ("informative", 33)] {
            let ds = gen_synthetic(kind.parse().unwrap(), n, 1).unwrap();
            let mut counts = vec![0usize; ds.num_classes];
            ds.labels.iter().for_each(|&l| counts[l] += 1);
            let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
            assert!(hi - lo <= 1, "{kind}: {counts:?}");
        }
    }

    #[test]
    fn zeroing_informative_pixels_erases_the_label() {
        let ds = gen_synthetic(SyntheticKind::InformativePixels { side: 4, informative: 2 }, 200, 3).unwrap();
        let sites = ds.informative.clone().unwrap();
        assert_eq!(sites.len(), 2);
        let mut means = [[0.0f64; 16]; 2];
        let mut counts = [0usize; 2];
        for (x, &l) in ds.inputs.iter().zip(&ds.labels) {
            for &s in &sites {
                assert_eq!(x[s] >= 0.6, l == 1);
            }
            let mut z = x.clone();
            sites.iter().for_each(|&s| z[s] = 0.0);
            counts[l] += 1;
            z.iter().enumerate().for_each(|(i, v)| means[l][i] += v);
        }
        // After zeroing, every pixel has the same label-independent distribution.
        for (i, (a, b)) in means[0].iter().zip(&means[1]).enumerate() {
            let d = a / counts[0] as f64 - b / counts[1] as f64;
            assert!(d.abs() < 0.15, "pixel {i} still separates classes: {d}");
        }
    }

    #[test]
    fn zero_samples_rejected() {
        assert!(gen_synthetic(SyntheticKind::Xor, 0, 0).is_err());
    }
}
