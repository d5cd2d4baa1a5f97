mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use error::CliError;

/// Patch-based forecasting with exact per-patch explanations.
#[derive(Debug, Parser)]
#[command(name = "patchdecomp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset as CSV.
    Synth(SynthArgs),
    /// Train a model and write its checkpoint and report.
    Train(TrainArgs),
    /// Forecast from a checkpoint, optionally exporting explanations.
    Forecast(ForecastArgs),
    /// Compare guided and random patch removal.
    Aopcr(AopcrArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the training seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Take the generator settings from this run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the generator seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Run directory; the config's `output_dir` when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ForecastArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Checkpoint; `<output_dir>/best.ckpt` when absent.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Comma-separated origins; every test window when absent.
    #[arg(long, value_delimiter = ',')]
    origins: Option<Vec<usize>>,
    /// Output directory; `<output_dir>/forecast` when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write contributions, curves and importance maps.
    #[arg(long)]
    explain: bool,
    /// Verify that contributions plus baseline reproduce every forecast.
    #[arg(long)]
    check_decomposition: bool,
}

#[derive(Debug, Args)]
struct AopcrArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Number of random-removal seeds.
    #[arg(long, default_value_t = 5)]
    seeds: usize,
    /// Comma-separated removal percentages.
    #[arg(long, value_delimiter = ',', default_values_t = patchdecomp::eval::DEFAULT_KS)]
    k: Vec<f64>,
    /// Results CSV; `<output_dir>/aopcr.csv` when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train(a),
        Command::Forecast(a) => commands::forecast(a),
        Command::Aopcr(a) => commands::aopcr(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
