//! `rhythmsim` command-line interface.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error,
//! 3 internal error.

mod commands;
mod outcome;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::outcome::{CliError, Summary};

#[derive(Debug, Parser)]
#[command(name = "rhythmsim", version, about = "Fit, simulate and compare daily activity rhythms over a POI inventory")]
struct Cli {
    /// Print a machine-readable summary on stdout.
    #[arg(long, global = true)]
    json: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate behavioral artifacts from observed stay events.
    Fit(FitArgs),
    /// Run the Monte Carlo simulator on one inventory.
    Simulate(SimulateArgs),
    /// Run a baseline plus counterfactual inventory scenarios.
    Scenario(ScenarioArgs),
    /// Compare a simulation log with observed events.
    Validate(ValidateArgs),
    /// Generate a synthetic corpus from a hidden ground truth.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub events: PathBuf,
    #[arg(long)]
    pub inventory: PathBuf,
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Hour x category start target (CSV) used instead of the observed default.
    #[arg(long)]
    pub sipf: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub artifacts: PathBuf,
    #[arg(long)]
    pub inventory: PathBuf,
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long = "scenario-id")]
    pub scenario_id: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    #[arg(long)]
    pub artifacts: PathBuf,
    /// Baseline inventory.
    #[arg(long)]
    pub baseline: PathBuf,
    /// One or more scenario spec JSON files.
    #[arg(long, num_args = 1.., required = true)]
    pub specs: Vec<PathBuf>,
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Observed stay events, or a simulation log CSV.
    #[arg(long)]
    pub observed: PathBuf,
    #[arg(long)]
    pub simlog: PathBuf,
    #[arg(long)]
    pub artifacts: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("RHYTHMSIM_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n >= 1)
        .ok_or_else(|| CliError::usage(format!("RHYTHMSIM_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::internal(format!("thread pool: {e}")))
}

fn dispatch(command: Command) -> Result<Summary, CliError> {
    configure_threads()?;
    match command {
        Command::Fit(a) => commands::fit(&a),
        Command::Simulate(a) => commands::simulate(&a),
        Command::Scenario(a) => commands::scenario(&a),
        Command::Validate(a) => commands::validate(&a),
        Command::Synth(a) => commands::synth(&a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let json = cli.json;
    let result = std::panic::catch_unwind(|| dispatch(cli.command))
        .unwrap_or_else(|_| Err(CliError::internal("unexpected internal failure")));
    match result {
        Ok(summary) => {
            if json {
                println!("{}", summary.to_json());
            } else {
                for p in &summary.written {
                    println!("wrote {p}");
                }
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}", e.message);
            if json {
                println!("{}", e.to_json());
            }
            ExitCode::from(e.code)
        }
    }
}
