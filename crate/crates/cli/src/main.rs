//! Command-line surface for the statistical-loss trainer.
//!
//! Exit codes: 0 success, 1 check/tolerance failure, 2 usage or
//! configuration error, 3 I/O or parse error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{FileConfig, Resolved, RidgeEps};
use statloss::loss::GradMode;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    ToleranceFailure,
    Lib(statloss::Error),
}

impl From<statloss::Error> for CliError {
    fn from(err: statloss::Error) -> Self {
        CliError::Lib(err)
    }
}

#[derive(Parser)]
#[command(
    name = "statloss",
    about = "Train and evaluate a classifier under the distribution-based statistical loss",
    version
)]
struct Cli {
    /// TOML config file with flat keys; command-line flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random choice of the command.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for generated files.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw synthetic Gaussian classes into train/test CSVs plus a manifest.
    Synth,
    /// Train the classifier; writes checkpoint, loss log and metrics.
    Train(TrainArgs),
    /// Validate analytic gradients against finite differences.
    Gradcheck(GradcheckArgs),
    /// Score a checkpoint on a dataset, optionally against a baseline.
    Eval(EvalArgs),
}

#[derive(Args, Default)]
struct TrainArgs {
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Fixed ridge for pooled scatter matrices, or "auto".
    #[arg(long, value_parser = RidgeEps::parse)]
    ridge_eps: Option<RidgeEps>,
    /// Gradient formulas: "paper" or "exact".
    #[arg(long, value_parser = config::parse_grad_mode)]
    grad_mode: Option<GradMode>,
    /// Clamp each diversity pair term at zero: true or false.
    #[arg(long)]
    hinge: Option<bool>,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    hidden_dims: Option<Vec<usize>>,
    #[arg(long)]
    train_data: Option<PathBuf>,
    #[arg(long)]
    test_data: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Number of randomized batches to check.
    #[arg(long, default_value_t = 50)]
    batches: usize,
    /// Maximum allowed exact-mode relative error.
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, value_parser = RidgeEps::parse)]
    ridge_eps: Option<RidgeEps>,
    #[arg(long)]
    hinge: Option<bool>,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint to score.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Second checkpoint for a McNemar comparison on the same data.
    #[arg(long)]
    baseline: Option<PathBuf>,
    /// Dataset CSV; falls back to the config's test_data.
    #[arg(long)]
    data: Option<PathBuf>,
}

fn resolve(cli: &Cli, train: Option<&TrainArgs>, check: Option<&GradcheckArgs>) -> Result<Resolved, CliError> {
    let file = match &cli.config {
        Some(path) => config::load_file(path).map_err(CliError::Config)?,
        None => FileConfig::default(),
    };
    let t = train;
    let resolved = Resolved {
        seed: cli.seed.or(file.seed).unwrap_or(0),
        out_dir: cli.out.clone().or(file.out_dir).unwrap_or_else(|| PathBuf::from(".")),
        train_data: t.and_then(|a| a.train_data.clone()).or(file.train_data),
        test_data: t.and_then(|a| a.test_data.clone()).or(file.test_data),
        lambda: t
            .and_then(|a| a.lambda)
            .or(check.and_then(|a| a.lambda))
            .or(file.lambda)
            .unwrap_or(0.01),
        beta: t.and_then(|a| a.beta).or(file.beta).unwrap_or(1.0),
        delta: t
            .and_then(|a| a.delta)
            .or(check.and_then(|a| a.delta))
            .or(file.delta)
            .unwrap_or(10.0),
        lr: t.and_then(|a| a.lr).or(file.lr).unwrap_or(0.001),
        iterations: t.and_then(|a| a.iterations).or(file.iterations).unwrap_or(2000),
        batch_size: t.and_then(|a| a.batch_size).or(file.batch_size).unwrap_or(84),
        ridge_eps: t
            .and_then(|a| a.ridge_eps)
            .or(check.and_then(|a| a.ridge_eps))
            .or(file.ridge_eps)
            .and_then(RidgeEps::as_option),
        grad_mode: t
            .and_then(|a| a.grad_mode)
            .or(file.grad_mode.as_deref().map(config::parse_grad_mode).transpose().map_err(CliError::Config)?)
            .unwrap_or(GradMode::Paper),
        hinge: t
            .and_then(|a| a.hinge)
            .or(check.and_then(|a| a.hinge))
            .or(file.hinge)
            .unwrap_or(false),
        hidden_dims: t
            .and_then(|a| a.hidden_dims.clone())
            .or(file.hidden_dims)
            .unwrap_or_else(|| vec![32, 16]),
        synth_classes: file.synth_class,
    };
    config::validate(&resolved).map_err(CliError::Config)?;
    Ok(resolved)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Synth => {
            let cfg = resolve(&cli, None, None)?;
            commands::synth::run(&cfg)
        }
        Command::Train(args) => {
            let cfg = resolve(&cli, Some(args), None)?;
            commands::train::run(&cfg)
        }
        Command::Gradcheck(args) => {
            let cfg = resolve(&cli, None, Some(args))?;
            commands::gradcheck::run(
                &cfg,
                &commands::gradcheck::GradcheckArgs {
                    batches: args.batches,
                    tolerance: args.tolerance,
                },
            )
        }
        Command::Eval(args) => {
            let cfg = resolve(&cli, None, None)?;
            commands::evaluate::run(
                &cfg,
                &commands::evaluate::EvalArgs {
                    checkpoint: args.checkpoint.clone(),
                    baseline: args.baseline.clone(),
                    data: args.data.clone(),
                },
            )
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::ToleranceFailure) => ExitCode::from(1),
        Err(CliError::Config(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
        Err(CliError::Lib(err)) => {
            eprintln!("error: {err}");
            let code = match err {
                statloss::Error::Io(_)
                | statloss::Error::Parse { .. }
                | statloss::Error::RaggedRows { .. }
                | statloss::Error::EmptyFile
                | statloss::Error::Checkpoint { .. } => 3,
                _ => 2,
            };
            ExitCode::from(code)
        }
    }
}
