//! Command-line front end: compute, verify, slice, simulate and benchmark
//! invariant sets of delayed systems.
//!
//! Every command prints a JSON summary on stdout. Failures print a JSON error
//! object on stderr and map to exit codes: 1 verification failure, 2 input
//! error, 3 internal or solver error.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use thiserror::Error;

pub mod commands;
mod io;

pub use commands::{cmd_bench, cmd_check, cmd_compute, cmd_direct, cmd_simulate, cmd_slice, DirectBundle};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Verification(String),

    #[error("{0}")]
    Input(String),

    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Verification(_) => 1,
            CliError::Input(_) => 2,
            CliError::Internal(_) => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Verification(_) => "verification_failure",
            CliError::Input(_) => "input_error",
            CliError::Internal(_) => "internal_error",
        }
    }

    pub fn to_json(&self) -> Value {
        json!({
            "error": self.kind(),
            "message": self.to_string(),
            "exit_code": self.exit_code(),
        })
    }
}

impl From<delayinv::Error> for CliError {
    fn from(e: delayinv::Error) -> Self {
        if e.is_input_error() {
            CliError::Input(e.to_string())
        } else {
            CliError::Internal(e.to_string())
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "delayinv", version, about = "Invariant sets for systems with input delay and disturbance preview")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Maximal invariant set through the reduced auxiliary system.
    Compute(ComputeArgs),
    /// Maximal invariant set of the full augmented system.
    Direct(DirectArgs),
    /// Re-verify a bundle against its specification.
    Check(CheckArgs),
    /// Fix some augmented coordinates and export the remaining slice.
    Slice(SliceArgs),
    /// Closed-loop simulation with an optional safety supervisor.
    Simulate(SimulateArgs),
    /// Sweep delay and preview lengths, recording emptiness and timings.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ComputeArgs {
    /// System specification (JSON).
    pub spec: PathBuf,
    /// Where to write the result bundle.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
    /// Set-equality tolerance of the fixed-point termination test.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// Skip redundancy removal of the assembled set.
    #[arg(long)]
    pub no_canonical: bool,
}

#[derive(Debug, Clone, Args)]
pub struct DirectArgs {
    pub spec: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct CheckArgs {
    pub bundle: PathBuf,
    pub spec: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SliceArgs {
    pub bundle: PathBuf,
    /// Fixed coordinates as `index=value` pairs, comma separated.
    #[arg(long, default_value = "")]
    pub fix: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    pub spec: PathBuf,
    pub bundle: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub steps: usize,
    /// Disturbance signal: inline JSON or a file holding one signal for all
    /// channels or an array with one per channel. Defaults to uniform random
    /// samples with seed 0.
    #[arg(long)]
    pub signal: Option<String>,
    /// Nominal gain `K` (`u = −K z`) as JSON rows, over the augmented state
    /// or over `x` only.
    #[arg(long, conflicts_with = "lqr")]
    pub gain_file: Option<PathBuf>,
    /// Nominal LQR gain for the augmented system with unit weights on `x`
    /// and `u`.
    #[arg(long)]
    pub lqr: bool,
    /// Filter the nominal input through the supervisor (default).
    #[arg(long, conflicts_with = "raw")]
    pub supervised: bool,
    /// Apply the nominal input, clipped to `U`, without supervision.
    #[arg(long)]
    pub raw: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Reduced,
    Direct,
    Both,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    pub spec: PathBuf,
    /// Delays, comma separated.
    #[arg(long)]
    pub tau_list: String,
    /// Preview lengths paired with the delays, or a single value for all.
    #[arg(long, default_value = "0")]
    pub p_list: String,
    #[arg(long, value_enum, default_value_t = Method::Reduced)]
    pub method: Method,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn dispatch(command: &Command) -> CliResult<Value> {
    match command {
        Command::Compute(a) => cmd_compute(a),
        Command::Direct(a) => cmd_direct(a),
        Command::Check(a) => cmd_check(a),
        Command::Slice(a) => cmd_slice(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Bench(a) => cmd_bench(a),
    }
}

/// Parse arguments, run the command and return the process exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let err = CliError::Input(e.to_string().trim().to_string());
            eprintln!("{}", err.to_json());
            return err.exit_code();
        }
    };
    match dispatch(&cli.command) {
        Ok(summary) => {
            println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
            0
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}
