//! `restyle` — rewrite sentences from one style into another without
//! parallel data.
//!
//! The full recipe, in order: `train-classifier`, `make-pairs` (or any
//! other source of rough pairs) → `filter-paraphrases` → `pretrain` →
//! `ibt-train` → `select-pairs` → `train-offline` → `evaluate`. Every
//! training stage takes `--config` plus a few override flags, writes the
//! resolved settings to `<out>/config.echo`, and is bit-reproducible from
//! that echo and the same inputs.

mod commands;
mod settings;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "restyle", version, about = "Text style transfer without parallel data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    MakePairs(commands::MakePairsArgs),
    FilterParaphrases(commands::FilterParaphrasesArgs),
    TrainClassifier(commands::TrainClassifierArgs),
    Pretrain(commands::PretrainArgs),
    IbtTrain(commands::IbtTrainArgs),
    Generate(commands::GenerateArgs),
    SelectPairs(commands::SelectPairsArgs),
    TrainOffline(commands::TrainOfflineArgs),
    Evaluate(commands::EvaluateArgs),
    Correlate(commands::CorrelateArgs),
}

fn main() {
    env_logger::init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::MakePairs(args) => commands::make_pairs(args),
        Command::FilterParaphrases(args) => commands::filter_paraphrases(args),
        Command::TrainClassifier(args) => commands::train_classifier(args),
        Command::Pretrain(args) => commands::pretrain(args),
        Command::IbtTrain(args) => commands::ibt_trained(args),
        Command::Generate(args) => commands::generate(args),
        Command::SelectPairs(args) => commands::select_pairs(args),
        Command::TrainOffline(args) => commands::train_offline(args),
        Command::Evaluate(args) => commands::evaluate(args),
        Command::Correlate(args) => commands::correlate(args),
    };
    if let Err(err) = result {
        eprintln!("restyle: {err:#}");
        std::process::exit(1);
    }
}
