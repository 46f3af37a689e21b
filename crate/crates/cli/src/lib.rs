//! Command-line driver: loss landscapes, verification sweeps, policy solving,
//! toy training runs and image metric reports.

pub mod landscape;
pub mod metrics;
pub mod output;
pub mod solve;
pub mod train;
pub mod verify;

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(
    name = "fdiv-align",
    version,
    about = "f-divergence preference alignment toolkit"
)]
pub struct Cli {
    /// JSON configuration for the subcommand; unknown keys are rejected.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides the configured one).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Random seed (overrides the configured one).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Loss surface and gradient field over a (X1, X2) grid.
    Landscape,
    /// Finite-difference, closed-form, ordering and round-trip suites.
    Verify,
    /// KKT-optimal policy for a single-state alignment problem.
    PolicySolve,
    /// Categorical or step-wise preference training.
    Train,
    /// Pairwise and per-image metrics for PGM images or a sample CSV.
    Metrics {
        /// Directory of PGM images or a sample CSV (overrides the configured input).
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

/// A suite ran but found a violation.
#[derive(Debug)]
pub struct VerificationFailure(pub String);

/// The configuration is malformed or inconsistent.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for VerificationFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "verification failed: {}", self.0)
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for VerificationFailure {}
impl std::error::Error for ConfigError {}

pub const EXIT_VERIFICATION: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;

/// Maps an error chain to the process exit status.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<VerificationFailure>() {
            return EXIT_VERIFICATION;
        }
        if cause.is::<ConfigError>() || cause.is::<serde_json::Error>() {
            return EXIT_CONFIG;
        }
        if cause.is::<std::io::Error>() {
            return EXIT_IO;
        }
        if let Some(e) = cause.downcast_ref::<fdiv_align::Error>() {
            return match e {
                fdiv_align::Error::Parse { .. } => EXIT_IO,
                fdiv_align::Error::Config(_)
                | fdiv_align::Error::ParseDivergence(_)
                | fdiv_align::Error::Parameter(_) => EXIT_CONFIG,
                _ => EXIT_VERIFICATION,
            };
        }
    }
    EXIT_VERIFICATION
}

/// Settings every command carries.
pub trait CommandConfig: Serialize + DeserializeOwned + Default {
    fn out(&mut self) -> &mut PathBuf;
    fn seed(&mut self) -> &mut u64;
    fn validate(&self) -> Result<(), ConfigError>;
}

/// Reads the config (or defaults), applies flag overrides and validates.
pub fn load_config<C: CommandConfig>(cli: &Cli) -> Result<C> {
    let mut cfg: C = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            serde_json::from_str(&text)
                .map_err(|e| ConfigError(format!("{}: {e}", path.display())))?
        }
        None => C::default(),
    };
    if let Some(out) = &cli.out {
        *cfg.out() = out.clone();
    }
    if let Some(seed) = cli.seed {
        *cfg.seed() = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::Landscape => landscape::run(load_config(cli)?),
        Command::Verify => verify::run(load_config(cli)?),
        Command::PolicySolve => solve::run(load_config(cli)?),
        Command::Train => train::run(load_config(cli)?),
        Command::Metrics { input } => {
            let mut cfg: metrics::MetricsConfig = load_config(cli)?;
            if let Some(input) = input {
                cfg.input = Some(input.clone());
            }
            metrics::run(cfg)
        }
    }
}

pub(crate) fn check_exists(path: &Path) -> Result<()> {
    std::fs::metadata(path)
        .map(|_| ())
        .with_context(|| format!("input {} is not accessible", path.display()))
}
