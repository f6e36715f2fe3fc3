use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Shape;

/// Replacement value for removed pixel sites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Fill {
    /// One value per channel (the training-set mean by convention).
    ChannelMeans(Vec<f64>),
    Zero,
    /// Take replacement values element-wise from a reference image.
    Image(Vec<f64>),
}

impl Fill {
    fn value(&self, shape: Shape, c: usize, site: usize) -> f64 {
        match self {
            Fill::ChannelMeans(m) => m[c],
            Fill::Zero => 0.0,
            Fill::Image(img) => img[c * shape.pixels() + site],
        }
    }
}

/// Number of sites removed at fraction `t` of `sites`: ⌊t · sites⌋.
pub(crate) fn removal_count(fraction: f64, sites: usize) -> usize {
    // The small slack keeps products like 0.3 * 10 from flooring to 2.
    ((fraction * sites as f64) + 1e-9).floor().min(sites as f64) as usize
}

/// Replaces the first ⌊t·HW⌋ sites of `ranking` in every channel with `fill`.
///
/// A site is one (row, column) location; `ranking` must be a permutation of
/// `0..H*W`.
pub fn perturb_pixels(x: &[f64], shape: Shape, ranking: &[usize], fraction: f64, fill: &Fill) -> Result<Vec<f64>> {
    let sites = shape.pixels();
    if x.len() != shape.len() {
        return Err(Error::InvalidParameter(format!("input has {} values, shape {shape} needs {}", x.len(), shape.len())));
    }
    if ranking.len() != sites {
        return Err(Error::InvalidParameter(format!("ranking has {} entries, image has {sites} pixel sites", ranking.len())));
    }
    let mut seen = vec![false; sites];
    for &r in ranking {
        if r >= sites || std::mem::replace(&mut seen[r], true) {
            return Err(Error::InvalidParameter("ranking is not a permutation of the pixel sites".into()));
        }
    }
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidParameter(format!("fraction {fraction} outside [0, 1]")));
    }
    match fill {
        Fill::ChannelMeans(m) if m.len() != shape.channels => {
            return Err(Error::InvalidParameter(format!("{} fill values for {} channels", m.len(), shape.channels)))
        }
        Fill::Image(img) if img.len() != shape.len() => {
            return Err(Error::InvalidParameter("fill image has the wrong size".into()))
        }
        _ => {}
    }
    let mut out = x.to_vec();
    for &site in &ranking[..removal_count(fraction, sites)] {
        for c in 0..shape.channels {
            out[c * sites + site] = fill.value(shape, c, site);
        }
    }
    Ok(out)
}

/// Site indices ordered by increasing score; ties keep index order.
pub fn rank_ascending(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    idx
}

/// Site indices ordered by decreasing score; ties keep index order.
pub fn rank_descending(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const S4: Shape = Shape::new(1, 2, 2);

    #[test]
    fn zero_fraction_is_identity() {
        let x = [0.1, 0.2, 0.3, 0.4];
        assert_eq!(perturb_pixels(&x, S4, &[3, 1, 2, 0], 0.0, &Fill::Zero).unwrap(), x);
    }

    #[test]
    fn full_fraction_gives_channel_means() {
        let x = [0.1, 0.2, 0.3, 0.4, 1.0, 2.0, 3.0, 4.0];
        let shape = Shape::new(2, 2, 2);
        let out = perturb_pixels(&x, shape, &[0, 1, 2, 3], 1.0, &Fill::ChannelMeans(vec![0.5, 7.0])).unwrap();
        assert_eq!(out, vec![0.5, 0.5, 0.5, 0.5, 7.0, 7.0, 7.0, 7.0]);
    }

    #[test]
    fn half_replaces_first_ranked_sites() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let out = perturb_pixels(&x, S4, &[3, 1, 2, 0], 0.5, &Fill::Zero).unwrap();
        assert_eq!(out, vec![1.0, 0.0, 3.0, 0.0]);
    }

    #[test]
    fn bad_ranking_rejected() {
        let x = [0.0; 4];
        assert!(perturb_pixels(&x, S4, &[0, 1, 2], 0.5, &Fill::Zero).is_err());
        assert!(perturb_pixels(&x, S4, &[0, 1, 1, 2], 0.5, &Fill::Zero).is_err());
    }

    #[test]
    fn ten_percent_steps_count_exactly() {
        let counts: Vec<usize> = (0..=10).map(|k| removal_count(k as f64 / 10.0, 10)).collect();
        assert_eq!(counts, (0..=10).collect::<Vec<_>>());
    }

    proptest! {
        #[test]
        fn idempotent_and_monotone(
            x in proptest::collection::vec(0.0f64..1.0, 16),
            seed in any::<u64>(),
            t1 in 0.0f64..1.0,
            t2 in 0.0f64..1.0,
        ) {
            use rand::{seq::SliceRandom, SeedableRng};
            let shape = Shape::new(1, 4, 4);
            let mut ranking: Vec<usize> = (0..16).collect();
            ranking.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let fill = Fill::ChannelMeans(vec![-1.0]);
            let once = perturb_pixels(&x, shape, &ranking, t1, &fill).unwrap();
            let twice = perturb_pixels(&once, shape, &ranking, t1, &fill).unwrap();
            prop_assert_eq!(&once, &twice);
            let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
            let a = perturb_pixels(&x, shape, &ranking, lo, &fill).unwrap();
            let b = perturb_pixels(&x, shape, &ranking, hi, &fill).unwrap();
            for i in 0..16 {
                if a[i] == -1.0 {
                    prop_assert_eq!(b[i], -1.0);
                }
            }
        }
    }
}
