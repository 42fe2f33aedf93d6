use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod manifest;
mod output;

/// Network-dynamics experiments: simulate coupled ODEs on graphs, forecast
/// with a reduced-order sparse model, cluster nodes, and fit surrogate
/// networks — all driven by a JSON config.
#[derive(Parser)]
#[command(name = "netdyn", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Path to the JSON experiment config.
    #[arg(long)]
    config: std::path::PathBuf,
    /// Output directory (overrides the config's outputs.dir).
    #[arg(long)]
    out: Option<std::path::PathBuf>,
    /// Override the dynamics seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Restrict output formats.
    #[arg(long, value_parser = ["csv", "json"])]
    format: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the configured dynamics and write the trajectory CSV.
    Simulate(RunArgs),
    /// Fit on the observation window, forecast the rest, score both.
    Predict(RunArgs),
    /// Spectral clustering from the adjacency matrix and/or the snapshots.
    Cluster(RunArgs),
    /// Fit a surrogate adjacency matrix and forecast with it.
    Surrogate(RunArgs),
    /// Aggregate metrics JSON files under a directory into one table.
    Report {
        /// Directory tree to scan for metrics.json files.
        #[arg(long)]
        out: std::path::PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => commands::simulate(&args),
        Command::Predict(args) => commands::predict(&args),
        Command::Cluster(args) => commands::cluster(&args),
        Command::Surrogate(args) => commands::surrogate(&args),
        Command::Report { out } => commands::report(&out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
