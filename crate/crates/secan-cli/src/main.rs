//! `secan`: estimation of covariate effects on a secondary outcome in
//! matched case-control data, plus the Monte Carlo study driver.

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use secan_cli::commands::{fit, simulate, summarize, CommandOutcome};

#[derive(Parser)]
#[command(
    name = "secan",
    version,
    about = "Secondary-outcome analysis for matched case-control studies",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit estimators to a CSV dataset per an analysis config
    Fit(fit::FitArgs),
    /// Run a Monte Carlo study of the estimators
    Simulate(simulate::SimulateArgs),
    /// Re-aggregate a per-replicate dump into a summary table
    Summarize(summarize::SummarizeArgs),
}

fn main() -> ExitCode {
    // Usage problems are input errors (exit 1); help and version are
    // successes, not errors.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let benign =
                matches!(err.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            let _ = err.print();
            return if benign { ExitCode::SUCCESS } else { ExitCode::from(1) };
        }
    };
    let result = match &cli.command {
        Command::Fit(args) => fit::run(args),
        Command::Simulate(args) => simulate::run(args),
        Command::Summarize(args) => summarize::run(args),
    };
    match result {
        Ok(CommandOutcome::Success) => ExitCode::SUCCESS,
        Ok(CommandOutcome::NonConvergence) => ExitCode::from(2),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
