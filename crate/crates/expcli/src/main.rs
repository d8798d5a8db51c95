mod config;
mod cost;
mod error;
mod experiments;
mod output;
mod svg;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tvbo_core::Execution;

use crate::config::ExperimentId;
use crate::error::{CliError, RunError};

#[derive(Debug, Parser)]
#[command(name = "tvbo-exp", version, about = "Seeded spectrum, scaling and regret experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an experiment and write its CSV/SVG artifacts with a manifest.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the configuration.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the output directory in the configuration.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads for replications.
        #[arg(long, value_parser = clap::value_parser!(u16).range(1..))]
        jobs: Option<u16>,
    },
    /// Check a configuration and estimate its cost without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// List the available experiments.
    List,
}

fn run(config_path: &Path, seed: Option<u64>, out: Option<PathBuf>, jobs: Option<u16>) -> Result<(), CliError> {
    let mut config = config::load(config_path)?;
    if let Some(seed) = seed {
        config.set_seed(seed);
    }
    if let Some(out) = out {
        config.set_out(out);
    }
    config.validate()?;
    let dir = config.out().map(Path::to_path_buf).unwrap_or_else(|| Path::new("out").join(config.id().name()));
    output::prepare(&dir)?;

    let artifacts = match jobs {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k as usize)
            .build()
            .map_err(RunError::compute)?
            .install(|| experiments::run(&config, Execution::Parallel)),
        None => experiments::run(&config, Execution::Parallel),
    }?;
    let manifest = output::write_all(&dir, config.id().name(), config.seed(), artifacts)?;
    println!("{}: wrote {} files to {}", config.id().name(), manifest.files.len() + 1, dir.display());
    Ok(())
}

fn validate(config_path: &Path) -> Result<(), CliError> {
    let config = config::load(config_path)?;
    config.validate()?;
    let est = cost::estimate(&config, cost::measure_constant());
    println!(
        "OK {}: {} dense eigendecompositions, largest {}x{}, estimated {:.1} s ({})",
        config.id().name(),
        est.decompositions,
        est.largest,
        est.largest,
        est.seconds,
        est.class().name()
    );
    if est.seconds >= cost::DESK_BUDGET_SECS {
        println!(
            "warning: dense eigendecomposition cost estimate {:.0} s exceeds the desk-scale budget of {:.0} s",
            est.seconds,
            cost::DESK_BUDGET_SECS
        );
    }
    Ok(())
}

fn list() {
    for id in ExperimentId::ALL {
        println!("{:<8}{}", id.name(), id.summary());
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, seed, out, jobs } => run(&config, seed, out, jobs),
        Command::Validate { config } => validate(&config),
        Command::List => {
            list();
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
