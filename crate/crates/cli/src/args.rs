//! Command-line surface. Flags override config-file values, which override
//! library defaults.

use std::path::PathBuf;

use clap::{Args, Subcommand, ValueEnum};
use offrec_core::data::LogSchema;
use offrec_core::eval::PoolSelection;

#[derive(Args)]
pub struct IngestArgs {
    /// Raw CSV interaction log.
    #[arg(long)]
    pub input: PathBuf,
    /// Output dataset directory.
    #[arg(long)]
    pub out: PathBuf,
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Log schema; overrides the config file.
    #[arg(long)]
    pub schema: Option<SchemaArg>,
    /// State window length; overrides the config file.
    #[arg(long)]
    pub window: Option<usize>,
}

#[derive(Args)]
pub struct PretrainArgs {
    /// Processed dataset directory from `ingest`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Training epochs; overrides the config file.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Run seed; overrides the config file.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args)]
pub struct TrainCrrArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Pretrained policy checkpoint to start from.
    #[arg(long, conflicts_with_all = ["no_init", "resume"])]
    pub init: Option<PathBuf>,
    /// Start from a randomly initialized policy instead of a checkpoint.
    #[arg(long, conflicts_with = "resume")]
    pub no_init: bool,
    /// Continue an interrupted run from its trainer state file.
    #[arg(long, conflicts_with_all = ["iterations", "seed"])]
    pub resume: Option<PathBuf>,
    /// Total training iterations; overrides the config file.
    #[arg(long)]
    pub iterations: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Save state and exit cleanly at the first validation boundary at or
    /// past this iteration; `--resume` picks the run back up.
    #[arg(long)]
    pub stop_after: Option<u64>,
}

#[derive(Args)]
pub struct EvaluateArgs {
    /// Policy checkpoint to score with.
    #[arg(long)]
    pub policy: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Which split's positives to rank.
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    /// Candidate pool: the full untouched catalog, a 100-item sample, or both.
    #[arg(long, value_enum, default_value_t = PoolArg::Both)]
    pub pool: PoolArg,
    /// Pool-sampling seed; overrides the config file.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Metric cutoff; overrides the config file.
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Args)]
pub struct SynthArgs {
    #[command(subcommand)]
    pub kind: SynthKind,
}

#[derive(Subcommand)]
pub enum SynthKind {
    /// Item sessions following a noisy deterministic successor rule.
    Sessions(SynthSessionsArgs),
    /// A small MDP with logged behavior data and exact solutions.
    Tabular(SynthTabularArgs),
}

#[derive(Args)]
pub struct SynthSessionsArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub items: usize,
    #[arg(long, default_value_t = 2000)]
    pub actors: usize,
    #[arg(long, default_value_t = 20)]
    pub min_len: usize,
    #[arg(long, default_value_t = 32)]
    pub max_len: usize,
    /// Probability a step ignores the successor rule.
    #[arg(long, default_value_t = 0.2)]
    pub noise: f64,
    /// Probability a step is a purchase rather than a click.
    #[arg(long, default_value_t = 0.1)]
    pub positive_prob: f64,
    #[arg(long, value_enum, default_value_t = SchemaArg::Sessions)]
    pub schema: SchemaArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args)]
pub struct SynthTabularArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = MdpArg::Chain)]
    pub mdp: MdpArg,
    /// State count for `--mdp random`.
    #[arg(long, default_value_t = 5)]
    pub states: usize,
    /// Action count for `--mdp random`.
    #[arg(long, default_value_t = 4)]
    pub actions: usize,
    #[arg(long, default_value_t = 0.9)]
    pub gamma: f64,
    /// Exploration rate of the logging policy around the optimal one.
    #[arg(long, default_value_t = 0.3)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 500)]
    pub episodes: usize,
    #[arg(long, default_value_t = 40)]
    pub horizon: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args)]
pub struct VerifyArgs {
    #[arg(long, value_enum, default_value_t = SuiteArg::All)]
    pub suite: SuiteArg,
    /// Random ranking instances in the metric suite.
    #[arg(long, default_value_t = 1000)]
    pub instances: usize,
    /// Random MDPs in the tabular suite.
    #[arg(long, default_value_t = 100)]
    pub mdps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemaArg {
    Ratings,
    Sessions,
}

impl From<SchemaArg> for LogSchema {
    fn from(s: SchemaArg) -> LogSchema {
        match s {
            SchemaArg::Ratings => LogSchema::Ratings,
            SchemaArg::Sessions => LogSchema::Sessions,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Validation,
    Test,
}

impl SplitArg {
    pub fn name(self) -> &'static str {
        match self {
            SplitArg::Train => "train",
            SplitArg::Validation => "validation",
            SplitArg::Test => "test",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PoolArg {
    Rand,
    All,
    Both,
}

impl PoolArg {
    pub fn name(self) -> &'static str {
        match self {
            PoolArg::Rand => "rand",
            PoolArg::All => "all",
            PoolArg::Both => "both",
        }
    }
}

impl From<PoolArg> for PoolSelection {
    fn from(p: PoolArg) -> PoolSelection {
        match p {
            PoolArg::Rand => PoolSelection::Rand,
            PoolArg::All => PoolSelection::All,
            PoolArg::Both => PoolSelection::Both,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MdpArg {
    Chain,
    Random,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SuiteArg {
    All,
    Gradients,
    Metrics,
    Tabular,
}
