//! `dipw`: simulate, fit, evaluate and rank CATE models from the command line.
//!
//! Exit status: 0 on success, 1 on a runtime failure, 2 on invalid usage or input.

mod commands;
mod options;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "dipw", version, about = "Denoised IPW-Lasso CATE estimation and uplift evaluation")]
struct Cli {
    /// Worker threads (results do not depend on this)
    #[arg(long, global = true, env = "DIPW_THREADS")]
    threads: Option<usize>,
    /// JSON file with option values; command-line flags take precedence
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Monte Carlo study on the benchmark data-generating process
    Simulate(commands::SimulateArgs),
    /// Fit one CATE model on a CSV file
    Fit(commands::FitArgs),
    /// Score one or more fitted models on a test CSV
    Evaluate(commands::EvaluateArgs),
    /// Uplift curve, AUUC and budget gains of one model on a test CSV
    Uplift(commands::UpliftArgs),
}

fn exit_status(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<options::Usage>().is_some() {
        return 2;
    }
    match err.downcast_ref::<dipw::Error>() {
        Some(e) if e.is_usage() => 2,
        _ => 1,
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let threads = cli.threads.unwrap_or(0);
    if cli.threads == Some(0) {
        return Err(options::usage("--threads must be at least 1"));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()?;
    let threads = rayon::current_num_threads();
    let config = cli.config.as_deref();
    match cli.command {
        Command::Simulate(a) => commands::simulate(a, config, threads),
        Command::Fit(a) => commands::fit(a, config, threads),
        Command::Evaluate(a) => commands::evaluate(a, config, threads),
        Command::Uplift(a) => commands::uplift(a, config, threads),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_status(&e))
        }
    }
}
