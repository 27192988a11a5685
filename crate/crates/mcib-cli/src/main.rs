//! `mcib`: conditional-information-bottleneck fusion experiments.
//!
//! Exit codes: 0 success, 2 configuration/usage errors, 3 data errors,
//! 4 training divergence.

mod commands;
mod config;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "mcib",
    version,
    about = "Multimodal conditional-information-bottleneck fusion: synthesize data, train, evaluate, ablate, audit, analyze"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multimodal dataset with known Bayes accuracies.
    Synth(commands::SynthArgs),
    /// Train a model on a feature file (stratified 70/10/20 split).
    Train(config::TrainFlags),
    /// Evaluate a trained model on a feature file.
    Eval(commands::EvalArgs),
    /// Run the ablation matrix (modalities, pairs, triples, encoder, granularity).
    Ablate(commands::AblateArgs),
    /// Random hyperparameter search scored by validation F1.
    Search(commands::SearchArgs),
    /// Shortcut-audit statistics over an annotation file.
    Audit(commands::AuditArgs),
    /// Prediction-overlap analysis between runs (fusion gain/loss).
    Analyze(commands::AnalyzeArgs),
    /// Finite-difference check of the full objective's gradients.
    Gradcheck(commands::GradcheckArgs),
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Synth(args) => commands::synth(args),
        Command::Train(flags) => commands::train(flags),
        Command::Eval(args) => commands::eval(args),
        Command::Ablate(args) => commands::ablate(args),
        Command::Search(args) => commands::search(args),
        Command::Audit(args) => commands::audit(args),
        Command::Analyze(args) => commands::analyze(args),
        Command::Gradcheck(args) => commands::gradcheck(args),
    };
    if let Err(err) = result {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
