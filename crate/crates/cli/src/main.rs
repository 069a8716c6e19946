//! `dyadic`: command-line front end for the dyadic shell model toolkit.
//!
//! Exit codes: 0 on success, 1 on usage or configuration errors, 2 on
//! numerical failure (partial artifacts are still written).

mod analyze;
mod config;
mod run;
mod tools;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dyadic_core::Error;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: 1,
            message: message.into(),
        }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        CliError {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_)
            | Error::LengthMismatch { .. }
            | Error::ShellOutOfRange { .. }
            | Error::WindowOutsideTrajectory { .. }
            | Error::Parse(_)
            | Error::Io(_)
            | Error::Json(_)
            | Error::Csv(_) => CliError::usage(e.to_string()),
            _ => CliError::numerical(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "dyadic",
    version,
    about = "Forced dyadic shell model: simulation and analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate one run and write its trajectory and summary.
    Simulate(RunArgs),
    /// Compute the fixed point for a forcing.
    FixedPoint(tools::FixedPointArgs),
    /// Evaluate X(mu), locate eigenvalues and build eigenvectors.
    Spectrum(tools::SpectrumArgs),
    /// Spectrum fit, decay check, energy balance and blow-up bound of a run.
    Analyze(analyze::AnalyzeArgs),
    /// Run a grid of simulations over shell counts and forcing amplitudes.
    Sweep(run::SweepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ClosureArg {
    Galerkin,
    Tail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitArg {
    Zero,
    FixedPoint,
    Geometric,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    EmbeddedPair,
    IntegratingFactor,
}

/// Flags shared by `simulate` and `sweep`. Each overrides the config file.
#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// JSON run configuration.
    #[arg(long, env = "DYADIC_CONFIG")]
    pub config: Option<PathBuf>,
    /// Truncation index N (shells 0..=N).
    #[arg(long)]
    pub shells: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Single-mode forcing on shell 0.
    #[arg(long, conflicts_with = "forcing")]
    pub f0: Option<f64>,
    /// JSON file with a sparse forcing map, e.g. {"0": 1.0, "2": 0.5}.
    #[arg(long)]
    pub forcing: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub closure: Option<ClosureArg>,
    #[arg(long)]
    pub t_end: Option<f64>,
    /// Initial data. `fixed-point` defaults to the tail closure and records
    /// the distance to the fixed point.
    #[arg(long, value_enum)]
    pub init: Option<InitArg>,
    /// Geometric data: a_j = amplitude * ratio^j.
    #[arg(long, default_value_t = 1.0)]
    pub amplitude: f64,
    /// Geometric ratio; defaults to 1/lambda.
    #[arg(long)]
    pub ratio: Option<f64>,
    /// Seed for random data.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Energy of random data.
    #[arg(long, default_value_t = 1.0)]
    pub energy: f64,
    #[arg(long)]
    pub rel_tol: Option<f64>,
    #[arg(long)]
    pub abs_tol: Option<f64>,
    #[arg(long)]
    pub max_step: Option<f64>,
    #[arg(long)]
    pub record_every: Option<f64>,
    #[arg(long, value_enum)]
    pub scheme: Option<SchemeArg>,
    /// Absolute surrogate threshold on the H^s norm.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Record the distance to the fixed point at every sample.
    #[arg(long)]
    pub fixed_point_reference: bool,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Simulate(args) => run::cmd_simulate(&args),
        Command::FixedPoint(args) => tools::cmd_fixed_point(&args),
        Command::Spectrum(args) => tools::cmd_spectrum(&args),
        Command::Analyze(args) => analyze::cmd_analyze(&args),
        Command::Sweep(args) => run::cmd_sweep(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
