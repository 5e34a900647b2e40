//! Command-line front end for the hydraulic estimation toolkit.
//!
//! Exit codes: 0 on success, 1 for usage problems (bad flags, bad
//! configuration keys), 2 for data problems (missing or malformed files,
//! mismatched dimensions), 3 for numeric failures (non-convergence,
//! diverging training).

mod commands;
mod config;
mod csvio;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use hydronet_core::NetworkError;
use hydronet_io::ContainerError;
use hydronet_io::inp::InpError;
use hydronet_model::ModelError;
use hydronet_solver::SolveError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<InpError> for CliError {
    fn from(e: InpError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ContainerError> for CliError {
    fn from(e: ContainerError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<NetworkError> for CliError {
    fn from(e: NetworkError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<SolveError> for CliError {
    fn from(e: SolveError) -> Self {
        match e {
            SolveError::NonConvergence { .. } | SolveError::Singular => {
                CliError::Numeric(e.to_string())
            }
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::NonFiniteLoss { .. } | ModelError::Autodiff(_) => {
                CliError::Numeric(e.to_string())
            }
            ModelError::BadConfig(_) => CliError::Usage(e.to_string()),
            ModelError::Solver(inner) => CliError::from(inner),
            other => CliError::Data(other.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "hydronet",
    version,
    about = "Steady-state hydraulics: reference solver, learned emulator, training and benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Summarize a network file as JSON.
    Parse(ParseArgs),
    /// Solve one steady state with the Newton reference solver.
    Solve(SolveArgs),
    /// Generate a demand/diameter scenario dataset.
    Gen(GenArgs),
    /// Train the emulator on a scenario dataset.
    Train(TrainArgs),
    /// Score a trained emulator against the reference solver.
    Eval(EvalArgs),
    /// Time the reference solver against the emulator.
    Bench(BenchArgs),
    /// Run the head recursion once on a given flow estimate.
    Fixpoint(FixpointArgs),
}

#[derive(Args)]
pub struct ParseArgs {
    /// Network file (INP format).
    pub network: PathBuf,
    /// Write the JSON summary here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// key=value file whose entries override the flags above.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args)]
pub struct SolveArgs {
    /// Network file (INP format).
    pub network: PathBuf,
    /// Demand CSV (`node_id,demand`); defaults to the file's base demands.
    pub demands: Option<PathBuf>,
    /// Node state CSV destination; stdout when omitted.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    /// Pipe flow CSV destination.
    #[arg(long = "flows-out")]
    pub flows_out: Option<PathBuf>,
    /// Scales every base demand when no demand CSV is given.
    #[arg(long = "demand-multiplier", default_value_t = 1.0)]
    pub demand_multiplier: f64,
    /// key=value file whose entries override the flags above.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args)]
pub struct GenArgs {
    /// Network file (INP format).
    pub network: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub scenarios: usize,
    #[arg(long, default_value_t = 2)]
    pub days: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Standard deviation of the per-scenario diameter perturbation.
    #[arg(long = "diameter-sigma", default_value_t = 1.0 / 30.0)]
    pub diameter_sigma: f64,
    /// Standard deviation of the per-step demand noise.
    #[arg(long = "demand-sigma", default_value_t = 0.1)]
    pub demand_sigma: f64,
    /// Dataset destination.
    #[arg(long)]
    pub out: PathBuf,
    /// key=value file whose entries override the flags above.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Network file (INP format).
    pub network: PathBuf,
    /// Scenario dataset; generated in process when omitted.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub scenarios: usize,
    #[arg(long, default_value_t = 2)]
    pub days: usize,
    #[arg(long, default_value_t = 3000)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Lower bound of the per-epoch application count draw.
    #[arg(long = "k-min", default_value_t = 10)]
    pub k_min: usize,
    /// Upper bound of the per-epoch application count draw.
    #[arg(long = "k-max", default_value_t = 15)]
    pub k_max: usize,
    /// Weight of the reconstructed-demand loss term.
    #[arg(long, default_value_t = 0.1)]
    pub rho: f64,
    /// Weight of the flow-gap loss term.
    #[arg(long, default_value_t = 0.1)]
    pub delta: f64,
    #[arg(long = "latent-dim", default_value_t = 128)]
    pub latent_dim: usize,
    #[arg(long, default_value_t = 5)]
    pub layers: usize,
    #[arg(long = "batch-size", default_value_t = 16)]
    pub batch_size: usize,
    /// Cap on samples visited per epoch; the whole set when omitted.
    #[arg(long = "epoch-samples")]
    pub epoch_samples: Option<usize>,
    /// Checkpoint destination.
    #[arg(long)]
    pub out: PathBuf,
    /// Loss curve CSV destination.
    #[arg(long = "loss-out")]
    pub loss_out: Option<PathBuf>,
    /// key=value file whose entries override the flags above.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args)]
pub struct EvalArgs {
    /// Network file (INP format).
    pub network: PathBuf,
    /// Trained checkpoint.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Scenario dataset; generated in process when omitted.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    pub scenarios: usize,
    #[arg(long, default_value_t = 2)]
    pub days: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Application count per sample.
    #[arg(long, default_value_t = 20)]
    pub iterations: usize,
    /// key=value file whose entries override the flags above.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args)]
pub struct BenchArgs {
    /// Network file (INP format).
    pub network: PathBuf,
    /// Trained checkpoint; a freshly seeded model when omitted.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long = "latent-dim", default_value_t = 128)]
    pub latent_dim: usize,
    #[arg(long, default_value_t = 5)]
    pub layers: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Scenario dataset; generated in process when omitted.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub scenarios: usize,
    #[arg(long, default_value_t = 1)]
    pub days: usize,
    /// Sample counts to time, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [100usize, 1000, 10000])]
    pub counts: Vec<usize>,
    /// Application count per emulated sample.
    #[arg(long, default_value_t = 20)]
    pub iterations: usize,
    /// Timing CSV destination; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// key=value file whose entries override the flags above.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args)]
pub struct FixpointArgs {
    /// Network file (INP format).
    pub network: PathBuf,
    /// Pipe flow CSV (`edge_id,from,to,flow`); zero flows when omitted.
    #[arg(long)]
    pub flows: Option<PathBuf>,
    /// Node state CSV destination; stdout when omitted.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    /// Reconstructed pipe flow CSV destination.
    #[arg(long = "flows-out")]
    pub flows_out: Option<PathBuf>,
    /// Flow offset of the reconstruction step.
    #[arg(long, default_value_t = 1e-8)]
    pub zeta: f64,
    /// key=value file whose entries override the flags above.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let message = e.to_string();
            if !message.is_empty() {
                eprintln!("error: {message}");
            }
            ExitCode::from(e.code())
        }
    }
}

fn run() -> Result<(), CliError> {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    return Ok(());
                }
                _ => CliError::Usage(String::new()),
            };
            let _ = e.print();
            return Err(code);
        }
    };
    match cli.command {
        Command::Parse(mut args) => {
            config::apply(args.config.clone(), &mut args)?;
            commands::parse(&args)
        }
        Command::Solve(mut args) => {
            config::apply(args.config.clone(), &mut args)?;
            commands::solve(&args)
        }
        Command::Gen(mut args) => {
            config::apply(args.config.clone(), &mut args)?;
            commands::gen(&args)
        }
        Command::Train(mut args) => {
            config::apply(args.config.clone(), &mut args)?;
            commands::train(&args)
        }
        Command::Eval(mut args) => {
            config::apply(args.config.clone(), &mut args)?;
            commands::eval(&args)
        }
        Command::Bench(mut args) => {
            config::apply(args.config.clone(), &mut args)?;
            commands::bench(&args)
        }
        Command::Fixpoint(mut args) => {
            config::apply(args.config.clone(), &mut args)?;
            commands::fixpoint(&args)
        }
    }
}
