//! `polmem`: configuration-driven front end for the memory simulator.
//!
//! Every command is a pure function of the effective configuration (config
//! file plus flags), which is written next to the results as `config.toml`
//! and hashed into the metadata header of every CSV.

// `!(x >= 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use thiserror::Error;

pub mod commands;
pub mod config;
mod output;
mod reproduce;

pub use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) | CliError::Io(_) => 3,
        }
    }
}

impl From<polmem_core::Error> for CliError {
    fn from(e: polmem_core::Error) -> Self {
        use polmem_core::Error as E;
        match e {
            E::Config(m) | E::InvalidInput(m) => CliError::Config(m),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "polmem", version, about = "Polarization-qubit spin-wave memory simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML configuration; defaults are used for anything it omits.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master RNG seed; overrides the configured one.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "results")]
    pub out: PathBuf,
    /// Comma-separated mean photon numbers.
    #[arg(long, global = true, value_delimiter = ',')]
    pub mu: Option<Vec<f64>>,
    /// Storage sequences per analyzer run.
    #[arg(long, global = true)]
    pub trials: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Fidelity-model curve with its μ₁ band.
    Predict,
    /// Monte Carlo histograms and parameter estimates.
    Simulate,
    /// State and process reconstruction from counts.
    Tomography,
    /// Classical bound curves and quantumness verdicts.
    Bounds,
    /// Every table and figure data set plus a tolerance summary.
    ReproducePaper,
    /// Print the default configuration.
    ShowDefaults,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Predict => "predict",
            Command::Simulate => "simulate",
            Command::Tomography => "tomography",
            Command::Bounds => "bounds",
            Command::ReproducePaper => "reproduce-paper",
            Command::ShowDefaults => "show-defaults",
        }
    }
}

/// Configuration after applying command-line overrides.
pub fn effective_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(mu) = &cli.mu {
        match cli.command {
            Command::Predict => cfg.predict.grid.mu = mu.clone(),
            Command::Simulate => cfg.experiment.mu = mu.clone(),
            Command::Bounds => cfg.bounds.grid.mu = mu.clone(),
            _ => return Err(CliError::Config(format!("--mu is not used by {}", cli.command.name()))),
        }
    }
    if let Some(n) = cli.trials {
        match cli.command {
            Command::Simulate => cfg.experiment.trials = n,
            Command::Tomography => cfg.tomography.trials = n,
            Command::ReproducePaper => cfg.reproduce.trials = n,
            _ => return Err(CliError::Config(format!("--trials is not used by {}", cli.command.name()))),
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Runs one command and returns the human-readable report.
pub fn run(cli: &Cli) -> Result<String, CliError> {
    if cli.command == Command::ShowDefaults {
        if cli.mu.is_some() || cli.trials.is_some() {
            return Err(CliError::Config("show-defaults takes no --mu or --trials".into()));
        }
        return RunConfig::default().to_toml();
    }
    let cfg = effective_config(cli)?;
    match cli.command {
        Command::Predict => commands::predict(&cfg, &cli.out),
        Command::Simulate => commands::simulate(&cfg, &cli.out),
        Command::Tomography => commands::tomography(&cfg, &cli.out),
        Command::Bounds => commands::bounds(&cfg, &cli.out),
        Command::ReproducePaper => reproduce::reproduce_paper(&cfg, &cli.out),
        Command::ShowDefaults => unreachable!(),
    }
}
