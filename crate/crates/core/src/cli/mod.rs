//! Command-line experiment runner.

mod commands;
mod config;
mod output;
mod svg;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::{
    ChannelKind, ConfusionKind, EmbeddingKind, ExperimentConfig, LinkCfg, McsKind, MetricsCfg, PhyCfg, PolicyKind,
    PredictorCfg, PredictorKind, SemmapCfg, SemmapMethodKind, SourceCfg, SourceKind, SweepCfg,
};
pub use output::{Cell, Format, OutDir, Table};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Schema(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn runtime(e: impl std::fmt::Display) -> Self {
        Self::Runtime(e.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Schema(_) => 2,
            Self::Runtime(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "tokcom", version, about = "Token communication link simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Experiment config (JSON). Defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Overrides the config seed; for `sweep` it replaces the seed list.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for sweeps (default: available parallelism).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Draw token sequences from the configured source.
    GenSource,
    /// Fit forward and backward Markov models on source samples.
    Train,
    /// Run one (config, seed) cell end to end.
    Simulate,
    /// Run every (snr_db, seed) cell of the sweep.
    Sweep,
    /// Arithmetic-code source sequences and report the rate.
    Compress,
    /// Optimize a token-to-constellation assignment.
    Semmap,
    /// Plot TCE, TER and PER against SNR from a results CSV.
    Report {
        /// Results CSV; defaults to `<out>/results.csv`.
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

/// Loads the config, applies overrides and runs the command.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Schema(format!("cannot read {}: {e}", path.display())))?;
            ExperimentConfig::from_json(&text)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        if matches!(cli.command, Command::Sweep) {
            cfg.sweep.seeds = vec![seed];
        }
    }
    cfg.validate()?;
    if cli.workers == Some(0) {
        return Err(CliError::Schema("--workers must be positive".into()));
    }
    commands::dispatch(cli, &cfg)
}
