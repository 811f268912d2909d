//! Batch runner: parse a JSON experiment, run one pipeline, write CSV/SVG/JSON
//! artifacts and a hashed manifest.

pub mod commands;
pub mod config;
pub mod output;

use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};

pub use config::ExperimentConfig;
pub use output::Manifest;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Forward,
    Dtn,
    PairingCheck,
    CgoCheck,
    CarlemanCheck,
    Reconstruct,
    StabilitySweep,
    Semilinear,
    RecoverNonlinearity,
}

impl Command {
    pub fn name(self) -> String {
        self.to_possible_value().expect("no skipped variants").get_name().to_string()
    }
}

#[derive(Debug, Parser)]
#[command(name = "heatprobe", version, about = "Parabolic potential recovery experiments")]
pub struct Cli {
    pub command: Command,
    /// JSON experiment file; built-in defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (default: the configured one, else `out`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: the configured count, else all cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("[{module}] {source}")]
    Numerical {
        module: &'static str,
        #[source]
        source: heatprobe_core::Error,
    },

    /// A verification ran to completion but missed its threshold; the artifacts are still written.
    #[error("[{module}] check failed: {message}")]
    Check { module: &'static str, message: String, artifacts: output::Artifacts },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            _ => 3,
        }
    }
}

impl std::fmt::Debug for output::Artifacts {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.names()).finish()
    }
}

/// Attaches a module tag to core errors.
pub trait Tag<T> {
    fn tag(self, module: &'static str) -> Result<T, CliError>;
}

impl<T> Tag<T> for heatprobe_core::Result<T> {
    fn tag(self, module: &'static str) -> Result<T, CliError> {
        self.map_err(|source| CliError::Numerical { module, source })
    }
}

pub fn load_config(path: Option<&Path>) -> Result<ExperimentConfig, CliError> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            ExperimentConfig::from_json(&text)
        }
        None => Ok(ExperimentConfig::default()),
    }
}

/// Runs one subcommand end to end. Nothing is written unless the
/// configuration is valid; numerical failures also leave the directory untouched.
pub fn run(cli: &Cli) -> Result<Manifest, CliError> {
    let mut cfg = load_config(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    let dir = cli.out.clone().or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let prepared = cfg.prepare()?;
    output::check_output_dir(&dir)?;
    let seed = prepared.config.seed;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(prepared.config.threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    match pool.install(|| commands::execute(cli.command, &prepared)) {
        Ok(artifacts) => artifacts.flush(&dir, &cli.command.name(), seed),
        Err(CliError::Check { module, message, artifacts }) => {
            artifacts.flush(&dir, &cli.command.name(), seed)?;
            Err(CliError::Check { module, message, artifacts: output::Artifacts::default() })
        }
        Err(e) => Err(e),
    }
}
