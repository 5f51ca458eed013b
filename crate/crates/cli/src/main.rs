//! `moldkit`: dataset generation, model fitting, evaluation, planning,
//! replay and benchmarking from the command line.
//!
//! Exit status is 0 on success, 2 when the invocation or its inputs are
//! invalid and 1 when a valid run fails.

// `!(x >= 0.0)` rejects NaN along with negatives.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod bench;
mod common;
mod error;
mod fit;
mod gen;
mod plan;
mod store;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::error::CliError;

/// Caps the worker threads of every parallel stage.
const THREADS_ENV: &str = "MOLDKIT_THREADS";

#[derive(Parser)]
#[command(name = "moldkit", version, about = "Plan shaping actions from depth images")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate an action dataset or a planted planning scenario.
    Gen(gen::GenArgs),
    /// Fit a patch model and report cross-validated prediction error.
    Fit(fit::FitArgs),
    /// Distance between two images, or prediction error over a dataset.
    Eval(fit::EvalArgs),
    /// Search for the action sequence that turns one image into another.
    Plan(plan::PlanArgs),
    /// Execute a plan on a simulated scenario and trace the distance.
    Replay(plan::ReplayArgs),
    /// Time the image distance against the Chamfer distance.
    Bench(bench::BenchArgs),
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("{THREADS_ENV}={raw:?} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::Gen(a) => gen::run(&a),
        Command::Fit(a) => fit::run_fit(&a),
        Command::Eval(a) => fit::run_eval(&a),
        Command::Plan(a) => plan::run_plan(&a),
        Command::Replay(a) => plan::run_replay(&a),
        Command::Bench(a) => bench::run(&a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // clap exits with status 2 on usage errors.
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("moldkit: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
