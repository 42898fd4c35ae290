//! The `jamloc` command line: simulate, featurize, train, eval, sweep and
//! report. Every command writes into its own output directory together with
//! the configuration it ran with.

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

pub mod commands;
pub mod report;
pub mod tables;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] jamloc::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}: no such file or directory")]
    MissingPath(PathBuf),
    #[error("{0} exists and is not empty (pass --overwrite to replace its contents)")]
    OutputExists(PathBuf),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    /// Stable category printed in the error line.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => match e {
                jamloc::Error::InvalidInput(_) => "input",
                jamloc::Error::Config(_) => "config",
                jamloc::Error::Nn(_) => "model",
                jamloc::Error::Dataset(_) => "dataset",
                jamloc::Error::Divergence { .. } => "divergence",
                jamloc::Error::Io(_) => "io",
                jamloc::Error::Json(_) => "format",
            },
            CliError::Io { .. } => "io",
            CliError::MissingPath(_) => "path",
            CliError::OutputExists(_) => "output",
            CliError::Csv(_) => "csv",
            CliError::Usage(_) => "usage",
        }
    }
}

impl From<jamloc::dataset_io::DatasetError> for CliError {
    fn from(e: jamloc::dataset_io::DatasetError) -> Self {
        CliError::Core(e.into())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScaleArg {
    Desk,
    #[value(alias = "paper")]
    Full,
}

impl From<ScaleArg> for jamloc::config::Scale {
    fn from(s: ScaleArg) -> Self {
        match s {
            ScaleArg::Desk => jamloc::config::Scale::Desk,
            ScaleArg::Full => jamloc::config::Scale::Full,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GridArg {
    Gamma,
    Dropout,
    Full,
}

#[derive(Debug, Parser)]
#[command(name = "jamloc", version, about = "Jammer localization and classification from 4-patch antenna snapshots")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Base random seed; overrides `seed` from the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads for simulation, featurization, seeds and sweep cells.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    /// Replace the contents of a non-empty output directory.
    #[arg(long, global = true)]
    pub overwrite: bool,

    /// Preset the configuration file is layered over.
    #[arg(long, global = true, value_enum, default_value = "desk")]
    pub scale: ScaleArg,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate train and test snapshots (train.gjld, test.gjld).
    Simulate {
        /// TOML run configuration; the preset is used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract features from a simulated dataset (train.feat, test.feat).
    Featurize {
        /// Directory written by `simulate`.
        #[arg(long)]
        data: PathBuf,
        /// TOML run configuration; defaults to the one stored in `--data`.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train `train.n_seeds` models and write checkpoints and metrics.csv.
    Train {
        /// Directory written by `featurize`.
        #[arg(long)]
        data: PathBuf,
        /// TOML run configuration; defaults to the one stored in `--data`.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate checkpoints per scenario tag.
    Eval {
        /// Checkpoint file; repeat to aggregate several seeds.
        #[arg(long, required = true)]
        checkpoint: Vec<PathBuf>,
        /// Directory written by `featurize`; its test split is evaluated.
        #[arg(long)]
        data: PathBuf,
        /// Restrict evaluation to these scenario tags.
        #[arg(long)]
        tag: Vec<String>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Gamma / dropout grid search for the fusion model (sweep.csv).
    Sweep {
        /// Directory written by `featurize`.
        #[arg(long)]
        data: PathBuf,
        /// TOML run configuration; defaults to the one stored in `--data`.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides `sweep.grid` from the configuration.
        #[arg(long, value_enum)]
        grid: Option<GridArg>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize the CSV files of one or more run directories as markdown.
    Report {
        /// Run directories written by train, eval or sweep.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// Output directory; defaults to the first run directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Executes a parsed command line.
pub fn run(cli: Cli) -> CliResult<()> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        // Fails only when a pool already exists (repeated in-process runs).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    let opts = commands::Options { seed: cli.seed, overwrite: cli.overwrite, scale: cli.scale.into() };
    match cli.command {
        Command::Simulate { config, out } => commands::simulate(&opts, config.as_deref(), &out),
        Command::Featurize { data, config, out } => commands::featurize(&opts, &data, config.as_deref(), &out),
        Command::Train { data, config, out } => commands::train(&opts, &data, config.as_deref(), &out),
        Command::Eval { checkpoint, data, tag, out } => commands::eval(&opts, &checkpoint, &data, &tag, &out),
        Command::Sweep { data, config, grid, out } => commands::sweep(&opts, &data, config.as_deref(), grid, &out),
        Command::Report { runs, out } => report::report(&opts, &runs, out.as_deref()),
    }
}
