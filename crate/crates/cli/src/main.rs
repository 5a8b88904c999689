//! `frsid`: data generation, identification, evaluation and QR benchmarks.
//!
//! Exit codes: 0 success, 1 runtime or numerical failure, 2 usage or
//! configuration error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::CliError;
use crate::config::{Method, Overrides};

#[derive(Parser, Debug)]
#[command(name = "frsid", version, about = "Fast randomized subspace identification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a random system; write train/validation data and the true model.
    Generate,
    /// Run FR2SID and/or the baseline `n_iter` times and report metrics.
    Identify,
    /// Shorthand for `identify --method baseline`.
    Baseline,
    /// Score a saved model on a dataset.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Time full sequential QR against sketching plus reduced QR.
    Benchmark,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = cli.overrides.resolve().map_err(CliError::usage)?;
    match cli.command {
        Command::Generate => commands::generate(&cfg),
        Command::Identify => commands::identify(&cfg),
        Command::Baseline => {
            cfg.method = Method::Baseline;
            commands::identify(&cfg)
        }
        Command::Evaluate { model, data } => commands::evaluate(&cfg, &model, &data),
        Command::Benchmark => commands::benchmark(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
