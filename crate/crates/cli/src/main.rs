//! `geolatent`: train, evaluate, and inspect the joint location/video model.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::Overrides;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
    #[error("data error: {0}")]
    Data(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Internal(_) => 1,
        }
    }
}

impl From<geolatent::Error> for CliError {
    fn from(e: geolatent::Error) -> Self {
        use geolatent::Error as E;
        match e {
            E::Config(m) => CliError::Config(vec![m]),
            E::Data { .. }
            | E::InvalidCoordinate { .. }
            | E::InvalidItem { .. }
            | E::LengthMismatch(..)
            | E::Checkpoint(_)
            | E::Io(_)
            | E::Json(_) => CliError::Data(e.to_string()),
            other => CliError::Internal(other.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "geolatent", version, about = "Joint geographic and viewing-history latent factors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the model to a dataset
    Train(Flags),
    /// Draw a synthetic dataset with ground truth
    Generate(Flags),
    /// Score held-out customers and compare with ground truth
    Evaluate(Flags),
    /// Summarize the learned factors
    Report(Flags),
    /// Continue a run from a checkpoint
    Resume(Flags),
}

#[derive(Args, Debug, Default)]
struct Flags {
    /// TOML run configuration
    #[arg(long)]
    config: Option<PathBuf>,
    /// Training customers (JSON lines)
    #[arg(long)]
    data: Option<PathBuf>,
    /// Held-out customers (JSON lines)
    #[arg(long)]
    heldout: Option<PathBuf>,
    /// Number of sweeps to run
    #[arg(long)]
    sweeps: Option<u64>,
    /// Parallel workers
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Sweeps between checkpoints
    #[arg(long)]
    checkpoint_every: Option<u64>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Plain product over views in the cluster conditional
    #[arg(long)]
    strict_paper_mode: bool,
    /// Checkpoint to read
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Ground truth written by `generate`
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Tab-separated item titles
    #[arg(long)]
    catalog: Option<PathBuf>,
    /// Entries per factor in reports
    #[arg(long, default_value_t = 5)]
    top: usize,
}

impl Flags {
    fn overrides(&self) -> Overrides {
        Overrides {
            data: self.data.clone(),
            heldout: self.heldout.clone(),
            out: self.out.clone(),
            checkpoint: self.checkpoint.clone(),
            truth: self.truth.clone(),
            catalog: self.catalog.clone(),
            sweeps: self.sweeps,
            workers: self.workers,
            seed: self.seed,
            checkpoint_every: self.checkpoint_every,
            strict_paper_mode: self.strict_paper_mode,
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (flags, cmd): (&Flags, fn(&Flags, config::RunConfig) -> Result<(), CliError>) = match &cli.command {
        Command::Train(f) => (f, commands::train),
        Command::Generate(f) => (f, commands::generate),
        Command::Evaluate(f) => (f, commands::evaluate),
        Command::Report(f) => (f, commands::report),
        Command::Resume(f) => (f, commands::resume),
    };
    let cfg = config::RunConfig::load(flags.config.as_deref(), &flags.overrides())?;
    cmd(flags, cfg)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
