use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use trajnet::dataset::Role;
use trajnet::neuralnet::TransferKind;
use trajnet::training::Method;
use trajnet_cli::commands::{cmd_evaluate, cmd_generate, cmd_plot_data, cmd_predict, cmd_run, cmd_train};
use trajnet_cli::{CliError, Overrides, Registry, RunConfig};

/// Neural-network surrogates for parametric trajectory maps.
#[derive(Parser)]
#[command(name = "trajnet", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML run configuration; built-in defaults when omitted
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for parameter sampling
    #[arg(long, global = true)]
    seed_data: Option<u64>,
    /// Seed for weight initialization
    #[arg(long, global = true)]
    seed_weights: Option<u64>,
    /// Training method: cg, oss or gdx
    #[arg(long, global = true)]
    method: Option<Method>,
    /// Hidden-layer transfer function: tansig, hardlim or purelin
    #[arg(long, global = true)]
    transfer: Option<TransferKind>,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample parameters and integrate the training, validation and test sets
    Generate,
    /// Train a network on the generated sets
    Train,
    /// Tabulate relative errors of trained models on all sets
    Evaluate {
        /// Model files; defaults to every model-*.bin in the output directory
        #[arg(long = "model")]
        models: Vec<PathBuf>,
    },
    /// Predict one trajectory and compare timing with integration
    Predict {
        /// Model file; defaults to the one matching --transfer and --method
        #[arg(long)]
        model: Option<PathBuf>,
        /// Parameter vector, comma separated
        #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
        params: Vec<f64>,
        /// Output CSV; defaults to predict.csv in the output directory
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Write true and predicted trajectories of selected samples as CSV
    PlotData {
        #[arg(long)]
        model: Option<PathBuf>,
        /// Sample set: train, validation or test
        #[arg(long, default_value = "test")]
        set: Role,
        /// Sample indices, comma separated
        #[arg(long, value_delimiter = ',', required = true)]
        indices: Vec<usize>,
    },
    /// Generate, train and evaluate
    Run,
    /// Print the effective configuration as TOML
    Config,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.global.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cfg.apply(&Overrides {
        seed_data: cli.global.seed_data,
        seed_weights: cli.global.seed_weights,
        method: cli.global.method,
        transfer: cli.global.transfer,
        out: cli.global.out.clone(),
    });
    let registry = Registry::builtin();
    let stdout = io::stdout();
    let log = &mut stdout.lock();
    match cli.command {
        Command::Generate => cmd_generate(&cfg, &registry, log).map(drop),
        Command::Train => cmd_train(&cfg, &registry, log).map(drop),
        Command::Evaluate { models } => cmd_evaluate(&cfg, &models, log).map(drop),
        Command::Predict { model, params, output } => {
            let model = model.unwrap_or_else(|| cfg.model_path());
            cmd_predict(&cfg, &registry, &model, &params, output.as_deref(), log).map(drop)
        }
        Command::PlotData { model, set, indices } => {
            let model = model.unwrap_or_else(|| cfg.model_path());
            cmd_plot_data(&cfg, &model, set, &indices, log).map(drop)
        }
        Command::Run => cmd_run(&cfg, &registry, log).map(drop),
        Command::Config => {
            let _ = write!(log, "{}", cfg.to_toml());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.kind());
            ExitCode::FAILURE
        }
    }
}
