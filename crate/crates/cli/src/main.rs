//! `qpmeas` command-line front end.
//!
//! Exit codes: 0 success or all checks passed, 1 a check failed,
//! 2 usage or validation error.

mod commands;
mod config;
mod output;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::CommonArgs;

#[derive(Debug)]
pub struct AppError(String);

impl AppError {
    pub fn usage(msg: impl Into<String>) -> Self {
        AppError(msg.into())
    }
}

#[derive(Parser)]
#[command(name = "qpmeas", version, about = "Simultaneous position-momentum measurement models on Gaussian states")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Errors and trade-off residuals over a nu grid (CSV or JSON table).
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Theorem conditions at a single nu (JSON report).
    Check {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Attained trade-off curve with the Heisenberg reference curves.
    Frontier {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Draws from a joint outcome law; samples to --out, summary JSON to stdout.
    Sample {
        #[command(flatten)]
        common: CommonArgs,
        /// meters, q-pair or p-pair.
        #[arg(long, default_value = "meters")]
        joint: String,
    },
    /// Posterior state at an outcome, or the mixture over an outcome rectangle (Y0 and Z only).
    Posterior {
        #[command(flatten)]
        common: CommonArgs,
        /// Outcome `z,w`.
        #[arg(long, allow_hyphen_values = true)]
        y: Option<String>,
        /// Rectangle `zlo,zhi,wlo,whi`; `inf` and `-inf` allowed.
        #[arg(long, allow_hyphen_values = true)]
        region: Option<String>,
    },
}

fn run(cli: Cli) -> Result<i32, AppError> {
    match cli.command {
        Command::Sweep { common } => commands::cmd_sweep(&common.resolve()?),
        Command::Check { common } => commands::cmd_check(&common.resolve()?),
        Command::Frontier { common } => commands::cmd_frontier(&common.resolve()?),
        Command::Sample { common, joint } => commands::cmd_sample(&common.resolve()?, &joint),
        Command::Posterior { common, y, region } => {
            commands::cmd_posterior(&common.resolve()?, y.as_deref(), region.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(AppError(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
