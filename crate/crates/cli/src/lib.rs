//! `fastslow` command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 runtime error,
//! 3 verification failure.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;

/// Default output directory when `--out` is not given.
pub const OUT_DIR_ENV: &str = "FASTSLOW_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "fastslow", version, about = "Energy-exchange SDEs, their microscopic origin and verification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// JSON configuration file.
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the `seed` key of the configuration.
    #[arg(short, long)]
    pub seed: Option<u64>,
    /// Output directory; defaults to $FASTSLOW_OUT_DIR, then `fastslow-out`.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    /// Worker threads; overrides the `workers` key.
    #[arg(short, long)]
    pub workers: Option<usize>,
    /// Progress messages on stderr (repeat for more).
    #[arg(short, long, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate the energy SDE (`graph`, `model`, `sde` sections).
    SimulateSde(Common),
    /// Integrate the coupled microscopic system (`graph`, `micro` sections).
    SimulateMicro(Common),
    /// Estimate the empirical Γ curve (`gamma` section).
    EstimateGamma(Common),
    /// Lag-sum variance of a cat-map observable (`sigma` section).
    EstimateSigma(Common),
    /// Run the verification suite (`verify` section; shipped default without --config).
    Verify(Common),
    /// Compare microscopic and SDE energy laws (`compare` section).
    Compare(Common),
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::SimulateSde(c)
            | Command::SimulateMicro(c)
            | Command::EstimateGamma(c)
            | Command::EstimateSigma(c)
            | Command::Verify(c)
            | Command::Compare(c) => c,
        }
    }
}

/// Parses `argv` (including the program name) and runs the subcommand.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match commands::execute(&cli.command, cli.command.common()) {
        Ok(code) => code,
        Err(commands::Failure::Config(e)) => {
            eprintln!("{e}");
            EXIT_USAGE
        }
        Err(commands::Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}
