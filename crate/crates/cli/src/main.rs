use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod output;

use config::{EngineName, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(#[from] cavity_nbody::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("validation FAIL")]
    ValidationFailed,
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) | CliError::Io(_) => 3,
            CliError::ValidationFailed => 4,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "cavity-nbody", version, about = "Cavity-mediated n-body spin interactions: couplings, flows, fringes, validation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[arg(long, global = true, value_enum)]
    engine: Option<EngineName>,
    /// Worker threads for scans (default: available parallelism).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Seed for optional projection noise.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Derived couplings as JSON.
    Couplings,
    /// Mean-field flow on a (θ, φ) grid.
    Flowfield,
    /// Fixed points of the mean-field flow with stability.
    FixedPoints,
    /// Readout versus Bragg phase, with harmonic fit.
    Fringe,
    /// Fringe amplitude versus the multi-photon detuning δ.
    Resonance,
    /// Deformed ring of initial states at fixed polar angle.
    Ring,
    /// Harmonic power spectrum of the fringe.
    Spectrum,
    /// Effective model against the full atom-cavity model at small N.
    Validate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Couplings => "couplings",
            Command::Flowfield => "flowfield",
            Command::FixedPoints => "fixed-points",
            Command::Fringe => "fringe",
            Command::Resonance => "resonance",
            Command::Ring => "ring",
            Command::Spectrum => "spectrum",
            Command::Validate => "validate",
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if cli.engine.is_some() {
        cfg.engine = cli.engine;
    }
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if let Some(k) = cli.workers {
        if k == 0 {
            return Err(CliError::Config("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot size worker pool: {e}")))?;
    }
    std::fs::create_dir_all(&cli.out)?;
    commands::dispatch(cli.command, &cfg, &cli.out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if !matches!(e, CliError::ValidationFailed) {
                eprintln!("error: {e}");
            }
            ExitCode::from(e.exit_code())
        }
    }
}
