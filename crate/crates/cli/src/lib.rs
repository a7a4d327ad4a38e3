//! Command-line driver for controllability-score computations.
//!
//! The binary is a thin wrapper around [`run`], which writes to caller-supplied
//! streams and returns the process exit code so that commands can be exercised
//! in-process.

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use ctrlscore::scores::ObjectiveKind;

pub mod commands;
pub mod model_file;
pub mod report;

pub use model_file::{LoadError, ModelFile, ParseError};
pub use report::{Rounding, RunReport};

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    /// Parse errors, bad arguments, I/O and internal failures.
    pub const FAILURE: i32 = 1;
    /// Unstable dynamics, infeasible model or failed assumption check.
    pub const INFEASIBLE: i32 = 2;
    /// Multi-starts disagree; the result is still emitted.
    pub const AMBIGUOUS: i32 = 3;
    /// Energy target outside the top-`n` eigenspace.
    pub const OUTSIDE_SPAN: i32 = 4;
}

/// Environment variable capping the worker-thread count (0 = automatic).
pub const THREADS_ENV: &str = "CTRLSCORE_THREADS";

#[derive(Debug, Parser)]
#[command(name = "ctrlscore", version, about = "Volumetric and average-energy controllability scores")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Table,
    Csv,
    JsonLines,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    Vcs,
    Aecs,
}

impl From<Kind> for ObjectiveKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Vcs => ObjectiveKind::Vcs,
            Kind::Aecs => ObjectiveKind::Aecs,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute optimal node weights for a model file.
    Score {
        model: PathBuf,
        #[arg(long, value_enum)]
        kind: Kind,
        /// Score order; overrides the model file.
        #[arg(long)]
        n: Option<usize>,
        /// Write the report here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = OutputFormat::Table)]
        format: OutputFormat,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of multi-starts (default: 1 when uniqueness is certified, else 8).
        #[arg(long)]
        starts: Option<usize>,
        /// Also run the exhaustive grid search at this lattice step.
        #[arg(long, value_name = "STEP")]
        grid_check: Option<f64>,
    },
    /// Report the feasibility, commutativity and n-spectrum checks.
    Check {
        model: PathBuf,
        #[arg(long)]
        n: Option<usize>,
    },
    /// Print AECS and VCS weights of the 1-D heat equation for sets of sine modes.
    HeatDemo {
        /// Index sets separated by `;`, nodes by `,` (e.g. "1,2,3,4;2,3,4,5").
        #[arg(long)]
        rows: Option<String>,
        #[arg(long, value_enum, default_value_t = Rounding::Truncate)]
        rounding: Rounding,
    },
    /// Minimum input energy to reach a target, and the reachable ellipsoid.
    Energy {
        model: PathBuf,
        /// Node weights, comma separated.
        #[arg(long, allow_hyphen_values = true)]
        p: String,
        /// Target state, comma separated.
        #[arg(long, allow_hyphen_values = true)]
        target: String,
        #[arg(long)]
        n: Option<usize>,
    },
}

/// Runs one command, returning the exit code.
pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let outcome = match cli.command {
        Command::Score { model, kind, n, out: path, format, seed, starts, grid_check } => {
            commands::score(&commands::ScoreArgs { model, kind: kind.into(), n, out: path, format, seed, starts, grid_check }, out, err)
        }
        Command::Check { model, n } => commands::check(&model, n, out),
        Command::HeatDemo { rows, rounding } => commands::heat_demo(rows.as_deref(), rounding, out),
        Command::Energy { model, p, target, n } => commands::energy(&model, &p, &target, n, out),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

/// Builds the global thread pool from [`THREADS_ENV`].
pub fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var(THREADS_ENV) else { return Ok(()) };
    let threads: usize = raw.trim().parse().map_err(|_| format!("{THREADS_ENV} must be a non-negative integer, got {raw:?}"))?;
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global().map_err(|e| e.to_string())
}
