//! Command-line workflows for ship maneuvering system identification:
//! generate synthetic free-running data, train the recurrent models,
//! evaluate rollouts against held-out maneuvers, and rerun the built-in
//! comparison studies. Every command is deterministic given its inputs,
//! flags and seed, and writes a manifest recording all three.

mod commands;
mod filecfg;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{
    cmd_coeffs, cmd_evaluate, cmd_generate, cmd_replicate, cmd_train, EvaluateArgs, GenerateArgs,
    ReplicateArgs, RestartPolicy, TrainArgs,
};
use shipsid_core::error::Error;

#[derive(Parser)]
#[command(
    name = "shipsid",
    version,
    about = "System identification toolkit for low-speed ship maneuvering models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset from a recipe file.
    Generate {
        /// Recipe file (key = value lines; see README for the grammar).
        #[arg(long)]
        recipe: PathBuf,
        /// Output dataset file.
        #[arg(long)]
        out: PathBuf,
        /// Master seed; fixed seeds give bit-identical datasets.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Override the recipe's sample period [s].
        #[arg(long)]
        dt: Option<f64>,
        /// Reference-model coefficient file (defaults to the built-in set).
        #[arg(long)]
        coeffs: Option<PathBuf>,
    },
    /// Train a network model on a dataset.
    Train {
        /// Training dataset file.
        #[arg(long)]
        dataset: PathBuf,
        /// Output checkpoint file.
        #[arg(long)]
        out: PathBuf,
        /// Training config file (key = value; defaults follow the
        /// published hyperparameter table).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Network architecture: full | finite.
        #[arg(long, default_value = "finite")]
        arch: String,
        /// Loss function: acc | state.
        #[arg(long, default_value = "state")]
        loss: String,
        /// Training seed (defaults to the first seed in the config).
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads for batch gradients.
        #[arg(long)]
        jobs: Option<usize>,
        /// Append a wall_time column to the training log. Off by default
        /// so reruns are byte-identical.
        #[arg(long)]
        timing: bool,
    },
    /// Evaluate checkpoints on a test dataset.
    Evaluate {
        /// Checkpoint file(s); repeat the flag for several.
        #[arg(long = "checkpoint", required = true)]
        checkpoints: Vec<PathBuf>,
        /// Test dataset file.
        #[arg(long)]
        test: PathBuf,
        /// Output directory for report.csv, per_trajectory.csv and plots.
        #[arg(long)]
        out_dir: PathBuf,
        /// Coefficient file adding a reference-model baseline column.
        #[arg(long)]
        baseline: Option<PathBuf>,
        /// Restart period: auto | none | seconds. Auto restarts every
        /// 100 s on runs of 200 s and longer.
        #[arg(long, default_value = "auto", value_parser = RestartPolicy::parse)]
        restart_period: RestartPolicy,
        /// Measured warmup frames after each restart for full-memory nets.
        #[arg(long, default_value_t = 10)]
        warmup_steps: usize,
        /// Skip writing per-trajectory plot files.
        #[arg(long)]
        no_plots: bool,
    },
    /// Rerun a built-in comparison study on synthetic data.
    Replicate {
        /// Study: loss-comparison | arch-comparison | data-comparison.
        #[arg(long)]
        study: String,
        /// Output directory.
        #[arg(long)]
        out_dir: PathBuf,
        /// Base seed; the study uses three consecutive seeds.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Worker threads for batch gradients.
        #[arg(long, default_value_t = 4)]
        jobs: usize,
        /// Use the published full-scale hyperparameters instead of the
        /// desk-scale defaults (hours of compute instead of minutes).
        #[arg(long)]
        paper_scale: bool,
    },
    /// Write the default reference-model coefficients to a file.
    Coeffs {
        #[arg(long)]
        out: PathBuf,
    },
}

/// Exit codes: 0 success, 2 usage/bad input, 3 I/O, 4 numeric divergence,
/// 5 schema mismatch. Clap's own usage errors also exit with 2.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) => 3,
        Error::SingularMassMatrix(_)
        | Error::NonFiniteState { .. }
        | Error::NonFiniteRollout { .. } => 4,
        Error::SchemaVersion { .. } => 5,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate {
            recipe,
            out,
            seed,
            dt,
            coeffs,
        } => cmd_generate(&GenerateArgs {
            recipe,
            out,
            seed,
            dt_override: dt,
            coeffs,
        }),
        Command::Train {
            dataset,
            out,
            config,
            arch,
            loss,
            seed,
            jobs,
            timing,
        } => cmd_train(&TrainArgs {
            dataset,
            out,
            config,
            arch,
            loss,
            seed,
            jobs,
            timing,
        }),
        Command::Evaluate {
            checkpoints,
            test,
            out_dir,
            baseline,
            restart_period,
            warmup_steps,
            no_plots,
        } => cmd_evaluate(&EvaluateArgs {
            checkpoints,
            test,
            out_dir,
            baseline,
            restart: restart_period,
            warmup_steps,
            plots: !no_plots,
        }),
        Command::Replicate {
            study,
            out_dir,
            seed,
            jobs,
            paper_scale,
        } => cmd_replicate(&ReplicateArgs {
            study,
            out_dir,
            seed,
            jobs,
            paper_scale,
        }),
        Command::Coeffs { out } => cmd_coeffs(&out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
