//! Command-line interface for the cascade fragmentation kinetics engine.
//!
//! Subcommands: `simulate` (deterministic solver run), `mc` (stochastic
//! ensemble), `analyze` (limit-law comparison of snapshots), `asympt`
//! (closed-form moment laws), `kernel` (Mellin moments of a kernel).
//!
//! Every command is deterministic given its config (seeds included):
//! repeated invocations produce byte-identical data files. Exit codes:
//! 0 success, 2 configuration error, 3 numerical failure, 4 I/O failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod io_util;
mod manifest;

/// Command-level error with the exit-code contract attached.
#[derive(Debug)]
pub enum CliError {
    /// Unreadable, unparsable, or invalid configuration (exit 2).
    Config(String),
    /// Numerical failure inside a run or analysis (exit 3).
    Numerics(String),
    /// Failure writing or reading data files (exit 4).
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerics(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "configuration error: {msg}"),
            CliError::Numerics(msg) => write!(f, "numerical failure: {msg}"),
            CliError::Io(msg) => write!(f, "I/O failure: {msg}"),
        }
    }
}

impl From<fragkin::Error> for CliError {
    fn from(err: fragkin::Error) -> Self {
        use fragkin::Error as E;
        match err {
            E::Config(_) | E::Domain(_) | E::StepSize { .. } => CliError::Config(err.to_string()),
            E::Numerics { .. } | E::ZeroKernel | E::EmptyPopulation | E::DegenerateDistribution => {
                CliError::Numerics(err.to_string())
            }
        }
    }
}

#[derive(Parser)]
#[command(
    name = "fragkin",
    version,
    about = "Cascade fragmentation kinetics: solver, moment laws, limit-law analysis, and a stochastic cross-check"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the kinetic equation; write observables, snapshots, summary
    Simulate {
        /// JSON run configuration
        #[arg(long)]
        config: PathBuf,
        /// Output directory (created if missing)
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the stochastic branching-process ensemble
    Mc {
        /// JSON ensemble configuration
        #[arg(long)]
        config: PathBuf,
        /// Output directory (created if missing)
        #[arg(long)]
        out: PathBuf,
        /// Override the master seed from the config
        #[arg(long)]
        seed: Option<u64>,
        /// Override the replica count from the config
        #[arg(long)]
        replicas: Option<usize>,
    },
    /// Compare density snapshots against the limit law
    Analyze {
        /// Shape parameter of the reference limit law
        #[arg(long)]
        alpha: f64,
        /// Output directory (created if missing)
        #[arg(long)]
        out: PathBuf,
        /// Snapshot CSV files (columns r,n)
        #[arg(required = true)]
        snapshots: Vec<PathBuf>,
    },
    /// Print the closed-form moment laws over a time range as CSV
    Asympt {
        /// Power-law exponent (0 allowed here for cross-checks)
        #[arg(long)]
        alpha: f64,
        /// Power-law rate coefficient C
        #[arg(long, default_value_t = 1.0)]
        coeff: f64,
        /// Conserved total volume
        #[arg(long, default_value_t = 1.0)]
        volume: f64,
        /// Initial surface moment M(3,0) for the exact affine law
        #[arg(long, default_value_t = 0.0)]
        m3_initial: f64,
        #[arg(long, default_value_t = 1.0)]
        t_start: f64,
        #[arg(long)]
        t_end: f64,
        /// Number of equally spaced output times
        #[arg(long, default_value_t = 25)]
        points: usize,
    },
    /// Print the Mellin moments of a kernel
    Kernel {
        /// JSON kernel specification (overrides --alpha/--coeff)
        #[arg(long)]
        config: Option<PathBuf>,
        /// Power-law exponent
        #[arg(long)]
        alpha: Option<f64>,
        /// Power-law rate coefficient C
        #[arg(long, default_value_t = 1.0)]
        coeff: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { config, out } => commands::simulate(&config, &out),
        Command::Mc {
            config,
            out,
            seed,
            replicas,
        } => commands::mc(&config, &out, seed, replicas),
        Command::Analyze {
            alpha,
            out,
            snapshots,
        } => commands::analyze(alpha, &out, &snapshots),
        Command::Asympt {
            alpha,
            coeff,
            volume,
            m3_initial,
            t_start,
            t_end,
            points,
        } => commands::asympt(alpha, coeff, volume, m3_initial, t_start, t_end, points),
        Command::Kernel {
            config,
            alpha,
            coeff,
        } => commands::kernel(config.as_deref(), alpha, coeff),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("fragkin: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
