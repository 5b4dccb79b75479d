//! `genrank` — generative re-ranking pipeline commands.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use genrank::cli::{self, ExperimentConfig};
use genrank::Error;

#[derive(Parser)]
#[command(
    name = "genrank",
    about = "Generative re-ranking: vocabulary, training, re-ranking, \
             evaluation, uncertainty export, cut-off prediction, and greedy \
             query generation",
    version
)]
struct Cli {
    /// Flat key = value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the experiment seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the output directory root.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Override any config key, e.g. --set epochs=5 (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the term vocabulary from the collection (and training queries).
    BuildVocab,
    /// Train a generative ranker on (query, D+, D-) triples.
    Train,
    /// Re-rank first-stage candidates with a trained model.
    Rerank,
    /// Evaluate a run against qrels (optionally t-test vs a baseline run).
    Eval,
    /// Export relevance/uncertainty and position-uncertainty CSVs.
    Uncertainty,
    /// Run the ranked-list cut-off prediction experiment.
    Cutoff,
    /// Greedily generate a query for every document.
    Generate,
}

fn build_config(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    for kv in &cli.overrides {
        let (key, value) = kv.split_once('=').ok_or_else(|| {
            Error::Config(format!("--set expects KEY=VALUE, got {kv:?}"))
        })?;
        cfg.set(key.trim(), value.trim())?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    Ok(cfg)
}

fn run() -> Result<(), Error> {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            eprint!("{e}");
            std::process::exit(1);
        }
        Err(e) => {
            // --help / --version
            print!("{e}");
            return Ok(());
        }
    };
    let cfg = build_config(&cli)?;
    match cli.command {
        Command::BuildVocab => cli::cmd_build_vocab(&cfg),
        Command::Train => cli::cmd_train(&cfg),
        Command::Rerank => cli::cmd_rerank(&cfg),
        Command::Eval => cli::cmd_eval(&cfg),
        Command::Uncertainty => cli::cmd_uncertainty(&cfg),
        Command::Cutoff => cli::cmd_cutoff(&cfg),
        Command::Generate => cli::cmd_generate(&cfg),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("genrank: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
