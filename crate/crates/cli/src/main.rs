use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use amda_cli::config::ExperimentConfig;
use amda_cli::pipeline::{self, ModelChoice, Workspace};
use amda_cli::report;
use amda_core::augment::SweepAxis;

#[derive(Parser)]
#[command(
    name = "amda",
    version,
    about = "Train small text classifiers, attack them with word-substitution \
             attackers, and measure how adversarial and mixup augmentation \
             change their robustness."
)]
struct Cli {
    /// Experiment configuration file.
    #[arg(short, long, global = true, default_value = "config.toml")]
    config: PathBuf,
    /// Override one config value, e.g. --set mixup.alpha=0.4 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModelArg {
    Standard,
    Amda,
}

impl From<ModelArg> for ModelChoice {
    fn from(arg: ModelArg) -> Self {
        match arg {
            ModelArg::Standard => ModelChoice::Standard,
            ModelArg::Amda => ModelChoice::Amda,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum AxisArg {
    Ratio,
    Alpha,
}

impl From<AxisArg> for SweepAxis {
    fn from(arg: AxisArg) -> Self {
        match arg {
            AxisArg::Ratio => SweepAxis::Ratio,
            AxisArg::Alpha => SweepAxis::Alpha,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train the plain classifier on the training split.
    Train,
    /// Attack the test split against a trained model and save the records.
    Attack {
        /// Which trained model to attack.
        #[arg(long, value_enum, default_value_t = ModelArg::Standard)]
        model: ModelArg,
    },
    /// Generate adversarial training examples against the standard model.
    Augment,
    /// Train on the augmented set with mixup.
    TrainAmda,
    /// Build the fixed adversarial set from the standard model and score a model on it.
    EvalSae {
        /// Which trained model to score.
        #[arg(long, value_enum, default_value_t = ModelArg::Standard)]
        model: ModelArg,
    },
    /// Attack a model directly and score it on the regenerated examples.
    EvalTae {
        /// Which trained model to score.
        #[arg(long, value_enum, default_value_t = ModelArg::Standard)]
        model: ModelArg,
    },
    /// Retrain under fresh seeds and compare fixed-set scores with per-model scores.
    SeedExp {
        /// How many extra seeds to derive from the master seed.
        #[arg(long, default_value_t = 2)]
        reseeds: usize,
    },
    /// Rerun augmentation and mixed training across one value grid from the config.
    Sweep {
        #[arg(long, value_enum)]
        axis: AxisArg,
    },
    /// Aggregate saved reports and sweep curves into report.md.
    Report,
}

fn run(cli: Cli, written: &mut Vec<PathBuf>) -> Result<()> {
    let config = ExperimentConfig::load(&cli.config, &cli.set)?;
    let ws = Workspace::load(config).context("loading inputs")?;
    match cli.command {
        Command::Train => pipeline::run_train(&ws, written),
        Command::Attack { model } => pipeline::run_attack(&ws, model.into(), written),
        Command::Augment => pipeline::run_augment(&ws, written),
        Command::TrainAmda => pipeline::run_train_amda(&ws, written),
        Command::EvalSae { model } => pipeline::run_eval_sae(&ws, model.into(), written),
        Command::EvalTae { model } => pipeline::run_eval_tae(&ws, model.into(), written),
        Command::SeedExp { reseeds } => pipeline::run_seed_exp(&ws, reseeds, written),
        Command::Sweep { axis } => pipeline::run_sweep(&ws, axis.into(), written),
        Command::Report => report::run_report(&ws, written),
    }
}

fn main() -> ExitCode {
    env_logger::init();
    if let Ok(threads) = std::env::var("AMDA_THREADS") {
        match threads.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    eprintln!("warning: AMDA_THREADS ignored: {e}");
                }
            }
            _ => eprintln!("warning: AMDA_THREADS={threads:?} is not a positive integer, ignored"),
        }
    }
    let cli = Cli::parse();
    let mut written = Vec::new();
    match run(cli, &mut written) {
        Ok(()) => {
            for path in &written {
                println!("wrote {}", path.display());
            }
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            if !written.is_empty() {
                eprintln!("partial outputs from this run, rerun after fixing the error:");
                for path in &written {
                    eprintln!("  {}", path.display());
                }
            }
            ExitCode::FAILURE
        }
    }
}
