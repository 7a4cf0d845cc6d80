//! `chomp`: simulation runs, fits on CSV data and evaluation of fitted bases.

mod data;
mod error;
mod eval;
mod fit;
mod simulate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(name = "chomp", version, about = "Sparse sufficient dimension reduction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run every replication of a scenario file and write the summary table.
    Simulate(simulate::SimulateArgs),
    /// Fit a sparse basis to a CSV data set.
    Fit(fit::FitArgs),
    /// Compare a fitted basis with the true one.
    Eval(eval::EvalArgs),
}

fn run(cli: Cli) -> Result<Vec<PathBuf>, CliError> {
    match cli.command {
        Command::Simulate(a) => simulate::run(&a),
        Command::Fit(a) => fit::run(&a),
        Command::Eval(a) => eval::run(&a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(written) => {
            for p in written {
                eprintln!("wrote {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
