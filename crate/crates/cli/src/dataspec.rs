use clap::{Args, ValueEnum};
use pathgrad::data::{gen_synthetic, load_idx, Dataset, SyntheticKind};
use serde::Serialize;

use crate::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitArg {
    Train,
    Test,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DataArgs {
    /// `moons`, `xor`, `informative[:side:k]`, `glyphs[:side]` or
    /// `idx:IMAGES,LABELS`.
    #[arg(long)]
    pub data: String,
    /// Sample count for synthetic sets.
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    /// Trailing samples held out as the test split.
    #[arg(long, default_value_t = 0)]
    pub holdout: usize,
    /// Split analyzed by the command; defaults to test when a holdout exists.
    #[arg(long, value_enum)]
    pub split: Option<SplitArg>,
}

#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Dataset,
    pub test: Option<Dataset>,
}

impl Splits {
    pub fn selected(&self, split: Option<SplitArg>) -> Result<&Dataset> {
        match (split, &self.test) {
            (Some(SplitArg::Train), _) | (None, None) => Ok(&self.train),
            (Some(SplitArg::Test) | None, Some(t)) => Ok(t),
            (Some(SplitArg::Test), None) => Err(CliError::Usage("--split test needs --holdout > 0".into())),
        }
    }
}

impl DataArgs {
    /// Loads or generates the dataset; synthetic sets are drawn from `seed`.
    pub fn load(&self, seed: u64) -> Result<Splits> {
        let full = match self.data.strip_prefix("idx:") {
            Some(paths) => {
                let (images, labels) = paths
                    .split_once(',')
                    .ok_or_else(|| CliError::Usage(format!("`{}`: expected idx:IMAGES,LABELS", self.data)))?;
                for p in [images, labels] {
                    if !std::path::Path::new(p).is_file() {
                        return Err(CliError::Usage(format!("data file `{p}` not found")));
                    }
                }
                load_idx(images, labels)?
            }
            None => gen_synthetic(self.data.parse::<SyntheticKind>()?, self.samples, seed)?,
        };
        if self.holdout == 0 {
            return Ok(Splits { train: full, test: None });
        }
        let (train, test) = full.split_off(self.holdout)?;
        Ok(Splits { train, test: Some(test) })
    }

    pub fn analyzed(&self, seed: u64) -> Result<Dataset> {
        Ok(self.load(seed)?.selected(self.split)?.clone())
    }
}
