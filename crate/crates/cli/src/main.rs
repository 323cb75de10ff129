//! `rtpp`: simulate contaminated event-stream datasets, fit the robust or
//! standard mixture, evaluate metrics, and run the experiment sweeps.

mod commands;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "rtpp",
    version,
    about = "Robust event-stream clustering under temporal point processes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with optional contamination.
    Simulate(commands::SimulateArgs),
    /// Fit the mixture model to a dataset directory.
    Fit(commands::FitArgs),
    /// Compute metrics for a finished fit.
    Eval(commands::EvalArgs),
    /// Run a full experiment sweep and write a results table.
    Experiment(commands::ExperimentArgs),
}

fn main() {
    env_logger::init();
    robust_tpp::init_thread_pool();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => commands::run_simulate(args),
        Command::Fit(args) => commands::run_fit(args),
        Command::Eval(args) => commands::run_eval(args),
        Command::Experiment(args) => commands::run_experiment(args),
    };
    if let Err(err) = result {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
