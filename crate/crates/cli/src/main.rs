//! `colbreak`: stationary profiles, trajectories and verification reports
//! for the collision-induced breakage equation.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::SimMode;

#[derive(Debug, Parser)]
#[command(name = "colbreak", version, about = "Self-similar profiles of the collision-induced breakage equation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding `output.directory`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of grid cells, overriding `grid.cells`.
    #[arg(long)]
    cells: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// March the rescaled equation to a stationary profile and verify it.
    FindProfile {
        #[command(flatten)]
        common: Common,
        /// Stationarity tolerance, overriding `solver.stationarity_tol`.
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Evolve the physical or rescaled equation and write snapshots.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        mode: Option<SimMode>,
        /// Final time, overriding `simulate.t_end`.
        #[arg(long)]
        t_end: Option<f64>,
        /// Start from a stored snapshot instead of `initial`.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Run the verification suite on a stored profile.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Profile CSV.
        #[arg(long)]
        profile: PathBuf,
    },
    /// Compare the conservative operator with the direct quadrature on random fields.
    OracleCompare {
        #[command(flatten)]
        common: Common,
        /// Number of random fields.
        #[arg(long, default_value_t = 100)]
        fields: usize,
    },
    /// Write the closed-form reference profile (scaled to unit discrete mass) and, optionally, the exact
    /// physical solution.
    EmitAnalytic {
        #[command(flatten)]
        common: Common,
        /// Also write `u(t, x)` at this time.
        #[arg(long)]
        time: Option<f64>,
    },
}

/// Failure classes and their exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Invalid configuration or input files (exit 2).
    Config(String),
    /// The run did not reach stationarity or aborted (exit 3).
    NonConvergence(String),
    /// A verification check failed (exit 4).
    Verification(String),
    /// Output could not be written (exit 1).
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::NonConvergence(_) => 3,
            CliError::Verification(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::NonConvergence(m) => write!(f, "not converged: {m}"),
            CliError::Verification(m) => write!(f, "verification failed: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::FindProfile { common, tol } => commands::find_profile(&common, tol),
        Command::Simulate { common, mode, t_end, resume } => commands::simulate(&common, mode, t_end, resume),
        Command::Verify { common, profile } => commands::verify(&common, &profile),
        Command::OracleCompare { common, fields } => commands::oracle_compare(&common, fields),
        Command::EmitAnalytic { common, time } => commands::emit_analytic(&common, time),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("colbreak: {e}");
            ExitCode::from(e.code())
        }
    }
}
