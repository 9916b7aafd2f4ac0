//! `cptal`: keypoint change-interval detection, fusion, classification and
//! scoring from the command line.

mod args;
mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::{ClassifyCmd, DetectCmd, EvaluateCmd, FuseCmd, Globals, RunCmd, SweepCmd, SynthCmd};

#[derive(Parser, Debug)]
#[command(name = "cptal", version, about = "Localize driver activities in pose-keypoint time series")]
struct Cli {
    /// TOML file with a full or partial run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for permutations, the mock classifier and synthetic data.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic three-view scenario with ground truth.
    Synth(SynthCmd),
    /// Detect candidate intervals in one view.
    Detect(DetectCmd),
    /// Repeat detection over a grid of k values or window lengths.
    Sweep(SweepCmd),
    /// Keep intervals that several views agree on.
    Fuse(FuseCmd),
    /// Label intervals with an activity class.
    Classify(ClassifyCmd),
    /// Score predictions against ground truth.
    Evaluate(EvaluateCmd),
    /// Detect, fuse, classify and evaluate in one go.
    Run(RunCmd),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot set up {n} worker threads: {e}");
            return ExitCode::from(3);
        }
    }
    let globals = Globals { config: cli.config, seed: cli.seed };
    let result = match cli.command {
        Command::Synth(c) => c.run(&globals),
        Command::Detect(c) => c.run(&globals),
        Command::Sweep(c) => c.run(&globals),
        Command::Fuse(c) => c.run(&globals),
        Command::Classify(c) => c.run(&globals),
        Command::Evaluate(c) => c.run(&globals),
        Command::Run(c) => c.run(&globals),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = if e.is_config() {
                3
            } else if e.is_input() {
                2
            } else {
                1
            };
            ExitCode::from(code)
        }
    }
}
