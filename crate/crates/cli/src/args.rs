//! Command-line surface.

use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "lbal",
    version,
    about = "Low-budget active-learning selection over precomputed embeddings",
    args_override_self = true
)]
pub struct Cli {
    /// Base seed; `select` runs this single seed unless `--seeds` is given.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,

    /// Flat `key=value` file of defaults; flags on the command line win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write synthetic train/test embedding and label files.
    Gen(GenArgs),
    /// Run selection strategies and write one selection file per (strategy, seed).
    Select(SelectArgs),
    /// Score selections and write report.json, report.txt and histogram.csv.
    Eval(EvalArgs),
    /// Run the bundled desk-scale protocol and print pass/fail per criterion.
    Reproduce(ReproduceArgs),
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("kind").required(true).args(["blobs", "longtail"])))]
pub struct GenArgs {
    /// Balanced Gaussian blobs.
    #[arg(long)]
    pub blobs: bool,
    /// Long-tailed class sizes decaying from `--max` to `--min`.
    #[arg(long)]
    pub longtail: bool,
    #[arg(long, default_value_t = 10)]
    pub classes: usize,
    /// Training examples per class (balanced blobs).
    #[arg(long, default_value_t = 100)]
    pub per_class: usize,
    #[arg(long, default_value_t = 16)]
    pub dim: usize,
    /// Per-coordinate noise standard deviation.
    #[arg(long, default_value_t = 0.1)]
    pub sigma: f64,
    /// Class centers are uniform in `[-scale, scale]^dim`.
    #[arg(long, default_value_t = 10.0)]
    pub scale: f64,
    /// Largest class size (long tail).
    #[arg(long, default_value_t = 128)]
    pub max: usize,
    /// Smallest class size (long tail).
    #[arg(long, default_value_t = 5)]
    pub min: usize,
    /// Shape of the long-tail decay; 1 is geometric.
    #[arg(long, default_value_t = 1.0)]
    pub exponent: f64,
    /// Balanced test examples per class.
    #[arg(long, default_value_t = 20)]
    pub test_per_class: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitialPool {
    Random,
    Kmeans,
}

#[derive(Debug, Clone, Args)]
pub struct ProbeArgs {
    /// Probe learning rate (default 0.01 for evaluation, 0.001 for max-entropy).
    #[arg(long)]
    pub probe_lr: Option<f64>,
    #[arg(long)]
    pub probe_epochs: Option<usize>,
    /// Probe batch size (default 4 for pools of at most 100 examples, else 128).
    #[arg(long)]
    pub probe_batch_size: Option<usize>,
    #[arg(long)]
    pub probe_weight_decay: Option<f64>,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("amount").args(["budget", "schedule"])))]
pub struct SelectArgs {
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Pool labels; required by uniform, uniform_capped and max_entropy.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Comma-separated strategy names.
    #[arg(long, value_delimiter = ',', required = true)]
    pub strategy: Vec<String>,
    /// Single-round budget.
    #[arg(long)]
    pub budget: Option<usize>,
    /// Cumulative budgets per round, e.g. `10,20,50`.
    #[arg(long)]
    pub schedule: Option<String>,
    /// Comma-separated seeds (overrides `--seed`; default 0,1,2).
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
    /// How coreset and max_entropy obtain their starting pool.
    #[arg(long, value_enum, default_value = "random")]
    pub initial: InitialPool,
    /// Size of that starting pool (default: the first scheduled budget).
    #[arg(long)]
    pub initial_size: Option<usize>,
    #[arg(long)]
    pub l2_normalize: bool,
    /// Multi-round K-means clusters only the not-yet-selected rows.
    #[arg(long)]
    pub recluster_unlabeled_only: bool,
    /// Examples per class (uniform) or per cluster (uniform_kmeans).
    #[arg(long)]
    pub per_class: Option<usize>,
    /// Cluster count for uniform_kmeans (default: declared label classes).
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long, default_value_t = 100)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    #[command(flatten)]
    pub probe: ProbeArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
pub enum MetricKind {
    Coverage,
    Histogram,
    Linear,
    Knn,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Pool embeddings the selections index into.
    #[arg(long)]
    pub train_embeddings: PathBuf,
    #[arg(long)]
    pub train_labels: PathBuf,
    /// Held-out embeddings (needed for linear and knn).
    #[arg(long)]
    pub test_embeddings: Option<PathBuf>,
    #[arg(long)]
    pub test_labels: Option<PathBuf>,
    /// Selection files, or directories scanned for `*.sel.json`.
    #[arg(long, value_delimiter = ',', required = true)]
    pub selections: Vec<PathBuf>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "coverage,histogram")]
    pub metrics: Vec<MetricKind>,
    /// L2-normalize features before training the linear probe.
    #[arg(long)]
    pub l2_normalize: bool,
    #[command(flatten)]
    pub probe: ProbeArgs,
}

#[derive(Debug, Args)]
pub struct ReproduceArgs {
    /// Fewer seeds and instances per criterion.
    #[arg(long)]
    pub quick: bool,
    /// Comma-separated criterion ids to run (default: all).
    #[arg(long, value_delimiter = ',')]
    pub only: Vec<String>,
    /// Test hook: shrink every tolerance to an unattainable value.
    #[arg(long, hide = true)]
    pub tamper_tolerance: bool,
}
