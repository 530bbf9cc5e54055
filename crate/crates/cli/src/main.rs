use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod demand;
mod output;
mod simulate;
mod sweep;
mod verify;

/// Cache-aided broadcast delivery with delayed CSIT: simulate, sweep bounds,
/// verify invariants.
#[derive(Parser, Debug)]
#[command(name = "cachemat", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Place, deliver and decode one configuration.
    Simulate(SimulateArgs),
    /// Emit plot-ready CSV over a parameter grid.
    Sweep(SweepArgs),
    /// Run the invariant battery.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(clap::Args, Debug)]
pub struct SimulateArgs {
    /// Number of users.
    #[arg(short = 'K', long = "users")]
    pub users: usize,
    /// Number of files.
    #[arg(short = 'N', long = "files")]
    pub files: usize,
    /// Cache size in files, e.g. `1`, `3/2` or `0.5`.
    #[arg(
        short = 'M',
        long = "cache",
        conflicts_with = "gamma",
        required_unless_present = "gamma"
    )]
    pub cache: Option<String>,
    /// Replication factor `K M / N` instead of `-M`.
    #[arg(long)]
    pub gamma: Option<usize>,
    #[arg(long, env = "SYNERGY_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Comma-separated 1-based file indices, `distinct` or `uniform-random`.
    #[arg(long, default_value = "distinct")]
    pub demand: String,
    /// Report destination; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Read library contents from a binary file instead of generating them.
    #[arg(long)]
    pub library: Option<PathBuf>,
    /// Write the library used for the run.
    #[arg(long)]
    pub save_library: Option<PathBuf>,
    /// Export the transcript as JSON metadata plus a `.bin` sidecar.
    #[arg(long)]
    pub transcript: Option<PathBuf>,
    /// Redraw channel uses whose decoding systems come out singular.
    #[arg(long)]
    pub resample: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SweepMode {
    Gap,
    Dof,
    Buffer,
}

#[derive(clap::Args, Debug)]
pub struct SweepArgs {
    #[arg(long, value_enum)]
    pub mode: SweepMode,
    /// Largest K for `gap` and `dof`.
    #[arg(long, default_value_t = 64)]
    pub kmax: usize,
    /// Gap targets for `buffer`: `a..b` (inclusive), or a comma list.
    #[arg(long = "G", default_value = "1..10")]
    pub gaps: String,
    /// K for `buffer`.
    #[arg(short = 'K', long = "users", default_value_t = 1000)]
    pub users: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(clap::Args, Debug)]
pub struct VerifyArgs {
    /// Small configurations only.
    #[arg(long)]
    pub quick: bool,
}

/// How a command failed; maps onto the exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags or an invalid configuration.
    Usage(String),
    /// A decode or analytic check failed.
    Check(String),
}

impl From<cachemat::Error> for Failure {
    fn from(e: cachemat::Error) -> Self {
        use cachemat::Error::*;
        match e {
            InvalidConfig(_)
            | Granularity { .. }
            | TooLarge(_)
            | Dimension(_)
            | LengthMismatch { .. }
            | Format(_)
            | Io(_) => Failure::Usage(e.to_string()),
            _ => Failure::Check(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => simulate::run(&args),
        Command::Sweep(args) => sweep::run(&args),
        Command::Verify(args) => verify::run(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
