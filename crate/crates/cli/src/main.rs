use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cropcast_cli::commands;
use cropcast_cli::config::{Overrides, RunConfig};
use cropcast_cli::{CliError, CliResult};

/// Crop-yield forecasting with structural time series marginals and dynamic copulas.
#[derive(Debug, Parser)]
#[command(name = "cropcast", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[arg(long, global = true, env = "CROPCAST_SEED")]
    seed: Option<u64>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output directory.
    #[arg(long, global = true, env = "CROPCAST_OUT")]
    out: Option<PathBuf>,

    /// Copula family, or a comma-separated list for `compare`.
    #[arg(long, global = true)]
    family: Option<String>,

    #[arg(long, global = true)]
    horizon: Option<usize>,

    /// Number of forecast paths.
    #[arg(long, global = true)]
    paths: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit the full pipeline and write the artifact and reports.
    Fit,
    /// Cluster all regions and report medoids.
    Cluster,
    /// Simulate forecast paths from a fitted artifact.
    Forecast,
    /// Fit several copula families and rank them.
    Compare,
    /// Score held-out forecasts of the configured family.
    Evaluate,
    /// Write a synthetic data set in the input file layout.
    Simulate,
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::config(e.to_string()))?;
    }
    let overrides = Overrides {
        seed: cli.seed,
        out: cli.out,
        family: cli.family,
        horizon: cli.horizon,
        paths: cli.paths,
    };
    let cfg = RunConfig::load(cli.config.as_deref(), &overrides)?;
    match cli.command {
        Command::Fit => commands::run_fit(&cfg).map(|_| ()),
        Command::Cluster => commands::run_cluster(&cfg).map(|_| ()),
        Command::Forecast => commands::run_forecast(&cfg).map(|_| ()),
        Command::Compare => commands::run_compare(&cfg).map(|_| ()),
        Command::Evaluate => commands::run_evaluate(&cfg).map(|_| ()),
        Command::Simulate => commands::run_simulate(&cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
