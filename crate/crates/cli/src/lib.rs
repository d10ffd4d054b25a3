//! Reproducible experiment orchestration for the `ldlearn` library.
//!
//! One subcommand per pipeline stage (`ldim`, `soa`, `stability`, `boost`,
//! `mi`, `bounds`, `affine`, `all`), a versioned JSON configuration, and
//! deterministic JSON-lines / CSV reports: identical (config, seed,
//! version) triples produce byte-identical files regardless of `--threads`.

pub mod commands;
pub mod config;
pub mod report;

use std::fmt;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

pub const SEED_ENV: &str = "LDLEARN_SEED";

/// Errors carry their process exit code: 2 configuration, 3 resource
/// guard, 4 I/O.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CliError {
    Config(String),
    Resource(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Resource(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Resource(m) => write!(f, "resource guard: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

#[derive(Debug, Parser)]
#[command(
    name = "ldlearn",
    version,
    about = "Littlestone-dimension pipeline experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Experiment configuration file (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Master seed override (also: LDLEARN_SEED). Flags win over the
    /// environment; the environment wins over the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker thread cap; 0 keeps the default. Never affects results.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    /// Report directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,

    #[arg(long, global = true, value_enum, default_value_t = Format::Both)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Littlestone dimension of the configured class.
    Ldim,
    /// The exhaustive worst-case online game against the SOA.
    Soa,
    /// Empirical output frequencies of the stable learner.
    Stability,
    /// Boosted runs: failure rate against its bound.
    Boost,
    /// Output-entropy estimation, with the exact oracle when configured.
    Mi,
    /// Closed-form bound evaluation at the faithful parameters.
    Bounds,
    /// The coin-free affine learner: stability and the sharper bound.
    Affine,
    /// Every applicable stage in order.
    All,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Ldim => "ldim",
            Command::Soa => "soa",
            Command::Stability => "stability",
            Command::Boost => "boost",
            Command::Mi => "mi",
            Command::Bounds => "bounds",
            Command::Affine => "affine",
            Command::All => "all",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Both,
}

/// Parse the config, resolve it, and run the requested stage(s) inside a
/// thread pool of the requested size. Returns the report paths written.
pub fn execute(cli: Cli) -> Result<Vec<PathBuf>, CliError> {
    let config_path = cli
        .config
        .ok_or_else(|| CliError::Config("--config <path> is required".into()))?;
    let text = std::fs::read_to_string(&config_path).map_err(|e| {
        CliError::Config(format!("cannot read config {}: {e}", config_path.display()))
    })?;
    let parsed = config::parse_config(&text)?;

    let env_seed = match std::env::var(SEED_ENV) {
        Ok(raw) => Some(
            raw.parse::<u64>()
                .map_err(|_| CliError::Config(format!("{SEED_ENV} must be a u64, got {raw:?}")))?,
        ),
        Err(_) => None,
    };
    let experiment = parsed.resolve(cli.seed.or(env_seed))?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| CliError::Config(e.to_string()))?;
    pool.install(|| commands::dispatch(cli.command, &experiment, &cli.out, cli.format))
}
