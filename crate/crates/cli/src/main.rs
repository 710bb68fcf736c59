//! `offrec`: data pipeline, two-stage training, ranking evaluation, synthetic
//! data, and self-verification for the sequential recommender.
//!
//! Exit codes: 0 success, 1 failed verification, 2 configuration error,
//! 3 data or I/O error, 4 numeric error.

mod args;
mod commands;
mod config;
mod dataset;
mod manifest;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "offrec", version, about = "Offline-RL sequential recommender")]
struct Cli {
    /// Worker threads for batched math. Outputs are bitwise identical for
    /// every value, including 1.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a raw interaction log into a processed dataset directory.
    Ingest(args::IngestArgs),
    /// Stage 1: supervised next-item pretraining of the policy network.
    Pretrain(args::PretrainArgs),
    /// Stage 2: critic-regularized training on top of a policy.
    TrainCrr(args::TrainCrrArgs),
    /// Rank held-out positives with a trained policy and report HR/NDCG.
    Evaluate(args::EvaluateArgs),
    /// Generate synthetic data with known structure.
    Synth(args::SynthArgs),
    /// Run the built-in verification suites against independent oracles.
    Verify(args::VerifyArgs),
}

fn exit_code(e: &offrec_core::Error) -> u8 {
    use offrec_core::Error;
    match e {
        Error::Config(_) => 2,
        Error::Data(_) | Error::Io(_) => 3,
        Error::Numeric(_) | Error::Autograd(_) => 4,
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();

    #[cfg(feature = "parallel")]
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    #[cfg(not(feature = "parallel"))]
    if cli.threads.is_some_and(|n| n > 1) {
        eprintln!("note: built without the parallel feature; --threads ignored");
    }

    let result = match cli.command {
        Command::Ingest(a) => commands::ingest(a).map(|()| ExitCode::SUCCESS),
        Command::Pretrain(a) => commands::pretrain_policy(a).map(|()| ExitCode::SUCCESS),
        Command::TrainCrr(a) => commands::train_crr(a).map(|()| ExitCode::SUCCESS),
        Command::Evaluate(a) => commands::evaluate(a).map(|()| ExitCode::SUCCESS),
        Command::Synth(a) => commands::synth(a).map(|()| ExitCode::SUCCESS),
        Command::Verify(a) => commands::verify(a).map(|all_ok| {
            if all_ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        ExitCode::from(exit_code(&e))
    })
}
