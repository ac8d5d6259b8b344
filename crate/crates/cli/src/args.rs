use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tmoe::data::{AnomalyKind, Split};

#[derive(Debug, Parser)]
#[command(name = "tmoe", version, about = "Train, evaluate and ablate TimeExpert forecasters")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Options shared by every command that reads a run configuration.
/// Flags take precedence over values in the config file.
#[derive(Debug, Clone, Args, Default)]
pub struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// CSV data file; replaces the config's data source.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed for initialization, shuffling and dropout. Falls back to the
    /// config, then to $TMOE_SEED.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for per-window computation.
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    /// Forecast horizon; replaces the config's horizon list.
    #[arg(long)]
    pub horizon: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Split {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AnomalyArg {
    AbruptOutlier,
    PeriodicityDeviation,
    ZeroImputation,
}

impl From<AnomalyArg> for AnomalyKind {
    fn from(a: AnomalyArg) -> AnomalyKind {
        match a {
            AnomalyArg::AbruptOutlier => AnomalyKind::AbruptOutlier,
            AnomalyArg::PeriodicityDeviation => AnomalyKind::PeriodicityDeviation,
            AnomalyArg::ZeroImputation => AnomalyKind::ZeroImputation,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write a checkpoint and loss history.
    Train(RunArgs),
    /// Score a checkpoint on the test split against the repeat-last baseline.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Write forecasts for every window of a split as CSV.
    Predict {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        /// Spacing between consecutive window anchors.
        #[arg(long, default_value_t = 1)]
        stride: usize,
    },
    /// Compare full, random-subset and TMOE attention.
    AblateAttention(RunArgs),
    /// Compare TMOE with and without the shared global expert.
    AblateShare(RunArgs),
    /// Train TMOE once per top-k value.
    SweepTopk {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated k values.
        #[arg(long = "k", value_delimiter = ',', required = true)]
        ks: Vec<usize>,
        /// Full-attention runs used to estimate seed-to-seed spread.
        #[arg(long, default_value_t = 3)]
        reference_seeds: usize,
    },
    /// Forecast clean and corrupted test windows with each attention variant.
    AnomalyBench {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum, value_delimiter = ',')]
        kinds: Vec<AnomalyArg>,
        /// Start of the corrupted region inside the lookback window.
        #[arg(long, default_value_t = 40)]
        position: usize,
        #[arg(long, default_value_t = 16)]
        length: usize,
        /// Outlier size in channel standard deviations.
        #[arg(long, default_value_t = 5.0)]
        magnitude: f64,
        /// Seasonal period distorted by periodicity deviations.
        #[arg(long, default_value_t = 24.0)]
        period: f64,
        /// Comma-separated harness seeds; defaults to the run seed.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = 64)]
        max_windows: usize,
    },
    /// Generate a sum-of-sinusoids CSV.
    Synth {
        #[arg(long, value_delimiter = ',', required = true)]
        periods: Vec<f64>,
        /// One per period; defaults to 1.
        #[arg(long, value_delimiter = ',')]
        amplitudes: Vec<f64>,
        /// Standard deviation of the additive Gaussian noise.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        /// Number of time steps.
        #[arg(long = "T", default_value_t = 2000)]
        length: usize,
        #[arg(long, default_value_t = 1)]
        channels: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference check of every analytic gradient in 64-bit.
    Gradcheck {
        /// Use the built-in tiny model (the default unless --config is given).
        #[arg(long)]
        tiny: bool,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mean Pearson correlation between lookback and horizon patches.
    Lagmap {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 16)]
        patch_len: usize,
        #[arg(long)]
        lookback: Option<usize>,
        #[arg(long, default_value_t = 1)]
        stride: usize,
    },
}
