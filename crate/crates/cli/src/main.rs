//! `dime`: train, evaluate and benchmark capacity-driven autoencoders and
//! discriminative MI estimators.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "dime",
    version,
    about = "Discriminative MI estimation and capacity-driven autoencoders"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by the config-driven commands.
#[derive(Debug, Args)]
struct RunArgs {
    /// Sectioned TOML config.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Overrides one config key, e.g. `--set estimator.gamma=0.5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum EvalMode {
    Bler,
    Mi,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train an autoencoder and save its parameters.
    TrainAe {
        #[command(flatten)]
        run: RunArgs,
        /// Model file to write; traces go next to it.
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
    },
    /// Evaluate a saved model: BLER or MI over the Eb/N0 grid.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_name = "PATH")]
        model: PathBuf,
        #[arg(long, value_enum, default_value = "bler")]
        mode: EvalMode,
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
    },
    /// Run estimators on correlated Gaussians with known MI.
    BenchEstimators {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
    },
    /// Finite-difference check of every op and value function.
    Gradcheck {
        #[arg(long, value_name = "U64", default_value_t = config::DEFAULT_SEED)]
        seed: u64,
        /// Corrupt the backward pass of one op (test fixture).
        #[arg(long, value_name = "OP", hide = true)]
        inject_fault: Option<String>,
    },
    /// Tabulate the per-sample γ-DIME objective against D.
    Landscape {
        /// Comma-separated γ values.
        #[arg(long, value_name = "LIST", value_delimiter = ',', num_args = 1.., required = true)]
        gamma: Vec<f64>,
        /// Density ratio R.
        #[arg(long, default_value_t = 1.0)]
        ratio: f64,
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
        /// Grid spans (0, d-max].
        #[arg(long, default_value_t = 3.0)]
        d_max: f64,
        #[arg(long, default_value_t = 3000)]
        points: usize,
    },
}

const EXIT_VALIDATION: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;

fn exit_code(err: &anyhow::Error) -> u8 {
    let numerical = err.chain().any(|e| {
        e.downcast_ref::<dime_core::Error>()
            .is_some_and(dime_core::Error::is_numerical)
            || e.downcast_ref::<commands::NumericalFailure>().is_some()
    });
    if numerical {
        EXIT_NUMERICAL
    } else {
        EXIT_VALIDATION
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_VALIDATION)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::TrainAe { run, out } => commands::train_ae(&run, &out),
        Command::Eval {
            run,
            model,
            mode,
            out,
        } => match mode {
            EvalMode::Bler => commands::eval_bler(&run, &model, &out),
            EvalMode::Mi => commands::eval_mi(&run, &model, &out),
        },
        Command::BenchEstimators { run, out } => commands::bench_estimators(&run, &out),
        Command::Gradcheck { seed, inject_fault } => {
            commands::gradcheck(seed, inject_fault.as_deref())
        }
        Command::Landscape {
            gamma,
            ratio,
            out,
            d_max,
            points,
        } => commands::landscape(&gamma, ratio, d_max, points, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
