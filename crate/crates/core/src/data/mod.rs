//! Datasets, IDX ingestion, synthetic generators and pixel removal.

mod idx;
mod perturb;
mod synthetic;

pub use idx::{load_idx, parse_idx_images, parse_idx_labels, write_idx, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC};
pub use perturb::{perturb_pixels, rank_ascending, rank_descending, Fill};
pub use synthetic::{gen_synthetic, SyntheticKind};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Shape;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub split: Split,
    pub shape: Shape,
    pub num_classes: usize,
    pub inputs: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    /// Per-channel means of the training split.
    pub channel_means: Vec<f64>,
    /// Ground-truth informative pixel sites, when the generator knows them.
    pub informative: Option<Vec<usize>>,
}

impl Dataset {
    /// Builds a training split; channel means are computed from `inputs`.
    pub fn new(
        name: impl Into<String>,
        shape: Shape,
        num_classes: usize,
        inputs: Vec<Vec<f64>>,
        labels: Vec<usize>,
    ) -> Result<Self> {
        if inputs.len() != labels.len() {
            return Err(Error::Dataset(format!("{} inputs but {} labels", inputs.len(), labels.len())));
        }
        if let Some(i) = inputs.iter().position(|x| x.len() != shape.len()) {
            return Err(Error::Dataset(format!("input {i} has {} values, shape {shape} needs {}", inputs[i].len(), shape.len())));
        }
        if let Some(i) = labels.iter().position(|&l| l >= num_classes) {
            return Err(Error::Dataset(format!("label {} at {i} exceeds class count {num_classes}", labels[i])));
        }
        let channel_means = channel_means(shape, &inputs);
        Ok(Self { name: name.into(), split: Split::Train, shape, num_classes, inputs, labels, channel_means, informative: None })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Splits off the last `test` samples as a test split that inherits the
    /// training means.
    pub fn split_off(mut self, test: usize) -> Result<(Dataset, Dataset)> {
        if test >= self.len() {
            return Err(Error::Dataset(format!("cannot hold out {test} of {} samples", self.len())));
        }
        let at = self.len() - test;
        let test_inputs = self.inputs.split_off(at);
        let test_labels = self.labels.split_off(at);
        self.channel_means = channel_means(self.shape, &self.inputs);
        self.split = Split::Train;
        let test = Dataset {
            name: self.name.clone(),
            split: Split::Test,
            shape: self.shape,
            num_classes: self.num_classes,
            inputs: test_inputs,
            labels: test_labels,
            channel_means: self.channel_means.clone(),
            informative: self.informative.clone(),
        };
        Ok((self, test))
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            inputs: indices.iter().map(|&i| self.inputs[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            ..self.clone_meta()
        }
    }

    pub fn take(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        self.subset(&(0..n).collect::<Vec<_>>())
    }

    /// Same samples in a seed-determined order.
    pub fn shuffled(&self, seed: u64) -> Dataset {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        self.subset(&order)
    }

    /// Replace inputs, keeping labels and metadata.
    pub fn with_inputs(&self, inputs: Vec<Vec<f64>>) -> Dataset {
        Dataset { inputs, labels: self.labels.clone(), ..self.clone_meta() }
    }

    fn clone_meta(&self) -> Dataset {
        Dataset {
            name: self.name.clone(),
            split: self.split,
            shape: self.shape,
            num_classes: self.num_classes,
            inputs: Vec::new(),
            labels: Vec::new(),
            channel_means: self.channel_means.clone(),
            informative: self.informative.clone(),
        }
    }
}

fn channel_means(shape: Shape, inputs: &[Vec<f64>]) -> Vec<f64> {
    let plane = shape.pixels();
    (0..shape.channels)
        .map(|c| {
            let total: f64 = inputs.iter().map(|x| x[c * plane..(c + 1) * plane].iter().sum::<f64>()).sum();
            if inputs.is_empty() {
                0.0
            } else {
                total / (inputs.len() * plane) as f64
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn test_split_inherits_train_means() {
        let inputs = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![10.0, 10.0]];
        let ds = Dataset::new("t", Shape::new(1, 1, 2), 2, inputs, vec![0, 1, 0]).unwrap();
        let (train, test) = ds.split_off(1).unwrap();
        assert_eq!(train.channel_means, vec![0.5]);
        assert_eq!(test.channel_means, vec![0.5]);
        assert_eq!(test.split, Split::Test);
    }

    #[test]
    fn rejects_bad_labels() {
        assert!(Dataset::new("t", Shape::flat(1), 2, vec![vec![0.0]], vec![2]).is_err());
        assert!(Dataset::new("t", Shape::flat(1), 2, vec![vec![0.0]], vec![]).is_err());
    }
}
