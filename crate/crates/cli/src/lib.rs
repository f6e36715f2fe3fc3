//! Argument parsing and dispatch for the `pathgrad` binary.

mod commands;
mod config;
mod dataspec;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

pub use config::RunConfig;
pub use dataspec::DataArgs;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] pathgrad::Error),

    #[error("{path}: {source}")]
    File { path: PathBuf, source: std::io::Error },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("{0}")]
    Usage(String),

    #[error("could not build the worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, Parser, Serialize)]
#[command(name = "pathgrad", version, about = "Critical pathways and pathway-gradient attribution for ReLU networks")]
pub struct Cli {
    /// Seed for every random choice of the run.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Worker threads (defaults to the number of CPUs).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    /// Output directory; created if missing.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Command {
    /// Train a network and write its manifest and per-epoch metrics.
    Train(TrainArgs),
    /// Neuron contributions for one input.
    Contrib(ContribArgs),
    /// Top-contribution pathway for one input.
    SelectPath(SelectArgs),
    /// Pathway from greedy Taylor pruning.
    GreedyPrune(GreedyArgs),
    /// Pathway from ℓ1-penalized neuron gates.
    Dgr(DgrArgs),
    /// Dead-fraction and Jaccard tables across selectors and sparsities.
    PathwayStats(StatsArgs),
    /// Certified linear-region radii of frozen pathways.
    Linearity(LinearityArgs),
    /// Attribution map for one input.
    Attribute(AttributeArgs),
    /// Least-relevant-first degradation curves.
    EvalLerf(LerfArgs),
    /// Remove-and-retrain accuracy curves.
    EvalRoar(RoarArgs),
    /// Cascading parameter randomization.
    SanityCheck(SanityArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Train(_) => "train",
            Command::Contrib(_) => "contrib",
            Command::SelectPath(_) => "select-path",
            Command::GreedyPrune(_) => "greedy-prune",
            Command::Dgr(_) => "dgr",
            Command::PathwayStats(_) => "pathway-stats",
            Command::Linearity(_) => "linearity",
            Command::Attribute(_) => "attribute",
            Command::EvalLerf(_) => "eval-lerf",
            Command::EvalRoar(_) => "eval-roar",
            Command::SanityCheck(_) => "sanity-check",
        }
    }
}

/// Sparsity κ in [0, 1).
fn parse_sparsity(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("`{s}` is not a number"))?;
    if (0.0..1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("sparsity {v} must lie in [0, 1)"))
    }
}

fn parse_percentile(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("`{s}` is not a number"))?;
    if (0.0..=100.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("percentile {v} must lie in [0, 100]"))
    }
}

fn parse_fraction(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("`{s}` is not a number"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("fraction {v} must lie in [0, 1]"))
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ModelArgs {
    /// Model manifest written by `train`.
    #[arg(long)]
    pub model: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Layer list, e.g. `conv:4:3,relu,pool:2,flatten,dense:16,relu,dense:10`.
    /// Defaults to a two-hidden-layer MLP.
    #[arg(long)]
    pub arch: Option<String>,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.05)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.0)]
    pub weight_decay: f64,
    /// Plain SGD instead of momentum.
    #[arg(long)]
    pub sgd: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct InputArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub data: DataArgs,
    /// Sample index within the selected split.
    #[arg(long, default_value_t = 0)]
    pub index: usize,
    /// Analyzed class; defaults to the predicted one.
    #[arg(long)]
    pub class: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ContribArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// neuronmct or neuronintgrad.
    #[arg(long, default_value = "neuronintgrad")]
    pub method: String,
    /// Integration steps for neuronintgrad.
    #[arg(long, default_value_t = 50)]
    pub steps: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SelectArgs {
    #[command(flatten)]
    pub contrib: ContribArgs,
    #[arg(long, default_value = "0.9", value_parser = parse_sparsity)]
    pub sparsity: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GreedyArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value = "0.9", value_parser = parse_sparsity)]
    pub sparsity: f64,
    /// Neurons removed per rescoring pass; defaults to 1% of all neurons.
    #[arg(long)]
    pub chunk: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DgrArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value = "0.9", value_parser = parse_sparsity)]
    pub sparsity: f64,
    /// ℓ1 penalty weight γ.
    #[arg(long, default_value_t = 0.05)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0.1)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 30)]
    pub iterations: usize,
    /// Gate initialization: ones or random.
    #[arg(long, default_value = "ones")]
    pub init: String,
    /// Use cross-entropy against the original prediction instead of squared error.
    #[arg(long)]
    pub cross_entropy: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BatchArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub data: DataArgs,
    /// Number of inputs taken from the start of the split.
    #[arg(long, default_value_t = 50)]
    pub inputs: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct StatsArgs {
    #[command(flatten)]
    pub batch: BatchArgs,
    /// Selectors: neuronmct, neuronintgrad, greedy, dgr, active.
    #[arg(long, value_delimiter = ',', default_value = "neuronintgrad,greedy")]
    pub methods: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "0.8,0.9,0.99", value_parser = parse_sparsity)]
    pub sparsity: Vec<f64>,
    #[arg(long, default_value_t = 50)]
    pub steps: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct LinearityArgs {
    #[command(flatten)]
    pub batch: BatchArgs,
    /// neuronmct or neuronintgrad.
    #[arg(long, default_value = "neuronintgrad")]
    pub method: String,
    #[arg(long, value_delimiter = ',', default_value = "0.8,0.9,0.99", value_parser = parse_sparsity)]
    pub sparsity: Vec<f64>,
    #[arg(long, default_value_t = 50)]
    pub steps: usize,
    /// Ball samples per input.
    #[arg(long, default_value_t = 64)]
    pub ball_samples: usize,
    /// Relative shrink δ of the sampled ball.
    #[arg(long, default_value_t = 0.01)]
    pub shrink: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MethodArgs {
    #[arg(long, default_value = "0.9", value_parser = parse_sparsity)]
    pub sparsity: f64,
    #[arg(long, default_value_t = 50)]
    pub steps: usize,
    /// Apply a morphological opening with this odd kernel size.
    #[arg(long)]
    pub opening: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AttributeArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// pathway-gradient (alias neuronintgrad), neuronmct, gradient, inputmct,
    /// inputintgrad, gbp, gradcam, random, oracle, edge.
    #[arg(long, default_value = "pathway-gradient")]
    pub method: String,
    #[command(flatten)]
    pub options: MethodArgs,
    /// Rank by signed channel sums instead of absolute sums.
    #[arg(long)]
    pub signed: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct LerfArgs {
    #[command(flatten)]
    pub batch: BatchArgs,
    #[arg(long, value_delimiter = ',', default_value = "neuronintgrad,inputintgrad,neuronmct,inputmct,random")]
    pub methods: Vec<String>,
    #[command(flatten)]
    pub options: MethodArgs,
    /// Removal fill: mean, zero or own.
    #[arg(long, default_value = "mean")]
    pub fill: String,
    #[arg(long, value_delimiter = ',', value_parser = parse_fraction)]
    pub fractions: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RoarArgs {
    /// Reference model that produces the rankings.
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub data: DataArgs,
    /// Architecture retrained at every cell; defaults to the reference's.
    #[arg(long)]
    pub arch: Option<String>,
    #[arg(long, value_delimiter = ',', default_value = "oracle,neuronintgrad,random")]
    pub methods: Vec<String>,
    #[command(flatten)]
    pub options: MethodArgs,
    #[arg(long, value_delimiter = ',', default_value = "10,30,50,70,90", value_parser = parse_percentile)]
    pub percentiles: Vec<f64>,
    /// Retraining seeds.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    pub seeds: Vec<u64>,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.05)]
    pub learning_rate: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SanityArgs {
    #[command(flatten)]
    pub batch: BatchArgs,
    #[arg(long, value_delimiter = ',', default_value = "neuronintgrad,gradient,edge")]
    pub methods: Vec<String>,
    #[command(flatten)]
    pub options: MethodArgs,
}

/// Runs a parsed command line inside a worker pool of the requested size.
pub fn run(cli: Cli) -> Result<()> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        pool = pool.num_threads(j);
    }
    pool.build()?.install(|| commands::dispatch(&cli))
}
