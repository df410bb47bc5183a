//! `psc`: simulate datasets, fit the sampler, compute stratum curves and
//! run the ρ diagnostics and replication studies from the command line.

mod estimate;
mod fit;
mod options;
mod replicate;
mod simulate;
mod validate;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "psc", version, about = "Bayesian nonparametric principal stratification for continuous treatments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw a dataset and its ground truth from the simulation design.
    Simulate(simulate::Args),
    /// Run the sampler on a dataset and write the draw logs.
    Fit(fit::Args),
    /// Compute stratum curves and effects from draw logs.
    Estimate(estimate::Args),
    /// Diagnostics for the ρ posterior.
    #[command(subcommand)]
    ValidateRho(validate::Command),
    /// Repeated simulate, fit and estimate runs scored against the truth.
    Replicate(replicate::Args),
}

/// Caps rayon's global pool at `PSC_THREADS` when set.
fn configure_threads() -> anyhow::Result<()> {
    let Ok(raw) = std::env::var("PSC_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| anyhow::anyhow!("PSC_THREADS must be a positive integer, got {raw:?}"))?;
    anyhow::ensure!(n > 0, "PSC_THREADS must be a positive integer, got {raw:?}");
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Simulate(a) => simulate::run(a),
        Command::Fit(a) => fit::run(a),
        Command::Estimate(a) => estimate::run(a),
        Command::ValidateRho(c) => validate::run(c),
        Command::Replicate(a) => replicate::run(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
