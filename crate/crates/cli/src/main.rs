//! `prism`: simulate blind-deblurring problems, run the split Gibbs sampler
//! on them and score the reconstructions.

mod error;
mod export;
mod metrics;
mod run;
mod simulate;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "prism", version, about = "Blind deblurring by split Gibbs sampling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a (truth, kernel, measurement) instance directory.
    Simulate(simulate::SimulateArgs),
    /// Run the sampler on an instance.
    Run(run::RunArgs),
    /// Score reconstructions against ground truth.
    Metrics(metrics::MetricsArgs),
}

fn init_logging() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PRISM_LOG", "error"))
        .format_timestamp(None)
        .init();
}

fn fail(e: CliError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code())
}

fn main() -> ExitCode {
    init_logging();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Simulate(args) => simulate::run(args).map(|()| 0),
        Command::Run(args) => run::run(args).map(|()| 0),
        Command::Metrics(args) => metrics::run(args),
    };
    match outcome {
        Ok(0) => ExitCode::SUCCESS,
        Ok(skipped) => {
            eprintln!("{skipped} reconstruction(s) skipped");
            ExitCode::from(2)
        }
        Err(e) => fail(e),
    }
}
