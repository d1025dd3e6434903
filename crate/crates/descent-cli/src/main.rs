//! Command-line entry point: spec resolution (flags over config file over
//! defaults), seeded execution, and CSV/manifest emission.

mod config;
mod emit;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use descent::experiments::ExperimentSpec;

#[derive(Parser)]
#[command(
    name = "descent",
    version,
    about = "Norm-adapted gradient descent and first-order optimizer benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Steps-to-threshold race on an analytic function
    Race(RaceArgs),
    /// Teacher-student dense layer matching study
    LayerMatch(LayerMatchArgs),
    /// Fitted decay schedules and the alpha monitor against norm-adapted descent
    Hybrid(HybridArgs),
    /// Per-step equivalent-hyperparameter trace on an analytic function
    Rosetta(TraceArgs),
    /// Iterate trajectory on an analytic function
    Trace(TraceArgs),
    /// Vector-field length-ratio grid over an analytic function
    FieldGrid(FieldGridArgs),
}

#[derive(Args, Clone)]
pub struct CommonArgs {
    /// Experiment config (TOML spec, or a manifest.json to replay)
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (default: $DESCENT_OUT or ./out)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Base seed; per-run seeds are base_seed + run index
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Clone, Default)]
pub struct OptimizerArgs {
    /// Optimizer kind: sgd | sgd-momentum | nasgd | adam | rmsprop | adagrad |
    /// sgd-exp-decay | alpha-monitor
    #[arg(long)]
    pub optimizer: Option<String>,
    /// Learning rate (sgd, sgd-momentum, adam, rmsprop, adagrad)
    #[arg(long)]
    pub eta: Option<f64>,
    /// Percent-decrease target (nasgd)
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Momentum coefficient (sgd-momentum)
    #[arg(long)]
    pub mu: Option<f64>,
    /// First-moment decay (adam)
    #[arg(long)]
    pub beta1: Option<f64>,
    /// Second-moment decay (adam)
    #[arg(long)]
    pub beta2: Option<f64>,
    /// Numerical-stability epsilon (adam, rmsprop, adagrad)
    #[arg(long)]
    pub eps: Option<f64>,
    /// Accumulator decay (rmsprop)
    #[arg(long)]
    pub decay: Option<f64>,
    /// Initial rate (sgd-exp-decay, alpha-monitor)
    #[arg(long)]
    pub eta0: Option<f64>,
    /// Per-step decay base (sgd-exp-decay)
    #[arg(long)]
    pub base: Option<f64>,
    /// Equivalent-alpha threshold (alpha-monitor)
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Consecutive high steps before a decay (alpha-monitor)
    #[arg(long)]
    pub patience: Option<u32>,
    /// Rate multiplier when the monitor fires (alpha-monitor)
    #[arg(long)]
    pub factor: Option<f64>,
    /// Coefficient cap for nasgd (advanced; default 1)
    #[arg(long)]
    pub clamp: Option<f64>,
}

#[derive(Args)]
struct RaceArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    optimizer: OptimizerArgs,
    /// Objective: q | rosenbrock
    #[arg(long)]
    function: Option<String>,
    /// Start point, e.g. "1,1"
    #[arg(long, allow_hyphen_values = true)]
    start: Option<String>,
    /// Descending thresholds, e.g. "1e-2,1e-4,1e-6"
    #[arg(long)]
    thresholds: Option<String>,
    #[arg(long)]
    max_steps: Option<u64>,
    /// Sampled-alpha entry: interval "lo,hi"
    #[arg(long)]
    alpha_interval: Option<String>,
    /// Trials for the sampled-alpha entry
    #[arg(long)]
    trials: Option<u32>,
    /// Known objective lower bound override
    #[arg(long, allow_negative_numbers = true)]
    lower_bound: Option<f64>,
}

#[derive(Args)]
struct LayerMatchArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    optimizer: OptimizerArgs,
    /// Independent repetitions to aggregate over
    #[arg(long)]
    runs: Option<u32>,
    /// Training steps (minibatch size 1; 100 steps per epoch)
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    record_every: Option<u64>,
}

#[derive(Args)]
struct HybridArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    runs: Option<u32>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    record_every: Option<u64>,
    /// Alpha of the norm-adapted reference series
    #[arg(long)]
    alpha: Option<f64>,
}

#[derive(Args)]
struct TraceArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    optimizer: OptimizerArgs,
    #[arg(long)]
    function: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    start: Option<String>,
    /// Update steps to take
    #[arg(long)]
    steps: Option<u64>,
    /// Known objective lower bound override
    #[arg(long, allow_negative_numbers = true)]
    lower_bound: Option<f64>,
}

#[derive(Args)]
struct FieldGridArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    function: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    x_min: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    x_max: Option<f64>,
    #[arg(long)]
    x_count: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    y_min: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    y_max: Option<f64>,
    #[arg(long)]
    y_count: Option<usize>,
    /// Reference SGD rate folded into the ratio
    #[arg(long)]
    eta_star: Option<f64>,
    /// Reference norm-adapted alpha folded into the ratio
    #[arg(long)]
    alpha_star: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let run = || -> Result<(), config::CliError> {
        match cli.command {
            Command::Race(ref args) => {
                let (spec, lower) = config::resolve_race(args)?;
                let out_dir = config::out_dir(&args.common);
                emit::run_race(&spec, lower, &out_dir)
            }
            Command::LayerMatch(ref args) => {
                let spec = config::resolve_layer_match(args)?;
                let out_dir = config::out_dir(&args.common);
                emit::run_layer_match(&spec, &out_dir)
            }
            Command::Hybrid(ref args) => {
                let spec = config::resolve_hybrid(args)?;
                let out_dir = config::out_dir(&args.common);
                emit::run_hybrid(&spec, &out_dir)
            }
            Command::Rosetta(ref args) => {
                let (spec, lower) = config::resolve_trace(args, true)?;
                let out_dir = config::out_dir(&args.common);
                emit::run_rosetta(&spec, lower, &out_dir)
            }
            Command::Trace(ref args) => {
                let (spec, lower) = config::resolve_trace(args, false)?;
                let out_dir = config::out_dir(&args.common);
                emit::run_trace(&spec, lower, &out_dir)
            }
            Command::FieldGrid(ref args) => {
                let spec = config::resolve_field_grid(args)?;
                let out_dir = config::out_dir(&args.common);
                emit::run_field_grid(&spec, &out_dir)
            }
        }
    };
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(config::CliError::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(config::CliError::Io(err)) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}

/// Shared by config resolution: read an `ExperimentSpec` from a TOML file or
/// from the `spec` field of an emitted manifest.
pub fn load_spec(path: &std::path::Path) -> Result<ExperimentSpec, config::CliError> {
    config::load_spec(path)
}
