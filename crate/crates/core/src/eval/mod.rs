//! Attribution evaluation: least-relevant-first degradation, remove and
//! retrain, and cascading parameter randomization.

mod attributor;
mod lerf;
mod metrics;
mod roar;
mod sanity;

pub use attributor::{Attributor, Method, MethodAttributor, DEFAULT_OPENING_KERNEL, DEFAULT_PATHWAY_SPARSITY};
pub use lerf::{default_fractions, lerf_curve, DegradationCurve, RemovalFill};
pub use metrics::{auc, average_ranks, spearman, ssim, SSIM_K1, SSIM_K2, SSIM_RANGE, SSIM_SIGMA, SSIM_WINDOW};
pub use roar::{roar_run, RoarConfig, RoarPoint, RoarResult};
pub use sanity::{randomization_sanity, randomize_layer, SanityCheckpoint, SanityTrace, RANDOM_WEIGHT_STD};

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Metric name to value.
pub type Metrics = BTreeMap<String, f64>;

/// Metric values keyed by model hash, then dataset, then method.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub models: BTreeMap<String, BTreeMap<String, BTreeMap<String, Metrics>>>,
}

impl Summary {
    pub fn record(&mut self, model_hash: &str, dataset: &str, method: &str, metric: &str, value: f64) {
        self.models
            .entry(model_hash.to_string())
            .or_default()
            .entry(dataset.to_string())
            .or_default()
            .entry(method.to_string())
            .or_default()
            .insert(metric.to_string(), value);
    }

    pub fn load_or_default(path: impl AsRef<Path>) -> Result<Self> {
        match std::fs::read_to_string(path) {
            Ok(text) => Ok(serde_json::from_str(&text)?),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::default()),
            Err(e) => Err(e.into()),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}
