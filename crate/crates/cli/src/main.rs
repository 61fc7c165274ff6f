//! Command-line driver: reads a JSON run configuration, runs one analysis
//! and writes a JSON report (plus CSV series) to the output directory.
//!
//! Exit codes: 0 success, 1 configuration error, 2 numerical failure,
//! 3 property violation (oracle mismatch, identity counterexample, ...).

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Context;
use output::Sink;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(String),
    Property(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 1,
            CliError::Numerical(_) => 2,
            CliError::Property(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::Property(m) => write!(f, "property violation: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "filmstab",
    version,
    about = "Stability analysis of strained epitaxial films"
)]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides output.dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for randomized paths (overrides analysis.seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for dense linear algebra (also FILMSTAB_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the elastic equilibrium on the configured profile.
    CriticalPoint,
    /// Second-variation report and dispersion curve.
    Stability,
    /// Critical thickness of the flat film.
    FlatThreshold,
    /// Suppression of the flat-film instability by a regularised crystalline energy.
    Crystalline,
    /// Check the determinant identity behind the complementing condition.
    VerifyIdentity {
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Compare the second variation with finite differences of the energy.
    OracleCheck,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let threads =
        match cli.threads {
            Some(k) => Some(k),
            None => match std::env::var("FILMSTAB_THREADS") {
                Ok(v) => Some(v.trim().parse().map_err(|_| {
                    CliError::Config(format!("FILMSTAB_THREADS: invalid value {v:?}"))
                })?),
                Err(_) => None,
            },
        };
    if let Some(k) = threads {
        if k == 0 {
            return Err(CliError::Config("--threads: must be positive".into()));
        }
        filmstab::linalg::set_threads(k);
    }
    let config = match &cli.config {
        Some(path) => {
            let bytes = std::fs::read(path)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            let text = std::str::from_utf8(&bytes)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            let cfg = config::parse(text).map_err(CliError::Config)?;
            Some((cfg, bytes))
        }
        None => None,
    };
    let seed = cli
        .seed
        .or(config.as_ref().map(|c| c.0.analysis.seed))
        .unwrap_or(0);
    let dir = cli
        .out
        .clone()
        .or(config.as_ref().map(|c| c.0.output.dir.clone()))
        .unwrap_or_else(|| config::OutputConfig::default().dir);
    let ctx = Context {
        config,
        seed,
        sink: Sink::new(&dir)?,
    };
    match cli.command {
        Command::CriticalPoint => commands::critical_point(&ctx),
        Command::Stability => commands::stability(&ctx),
        Command::FlatThreshold => commands::flat_threshold(&ctx),
        Command::Crystalline => commands::crystalline(&ctx),
        Command::VerifyIdentity { dim, trials } => commands::verify_identity_cmd(&ctx, dim, trials),
        Command::OracleCheck => commands::oracle_check(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
