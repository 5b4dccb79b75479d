//! `genrank-toygen` — write a synthetic retrieval corpus so the whole
//! pipeline runs offline: collection, train/eval queries, triples, qrels,
//! and a BM25 first-stage run.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use genrank::toy::{generate_files, ToySpec};

#[derive(Parser)]
#[command(name = "genrank-toygen", about = "Synthetic corpus generator", version)]
struct Cli {
    /// Directory the corpus files are written to.
    #[arg(long, default_value = "toy-data")]
    out_dir: PathBuf,

    /// Entities with training queries and triples.
    #[arg(long, default_value_t = 60)]
    train_entities: usize,

    /// Held-out entities (4 eval queries each).
    #[arg(long, default_value_t = 40)]
    eval_entities: usize,

    /// BM25 candidate depth for the first-stage run.
    #[arg(long, default_value_t = 20)]
    candidates: usize,

    #[arg(long, default_value_t = 42)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut spec = ToySpec::new(cli.train_entities, cli.eval_entities, cli.seed);
    spec.candidates_k = cli.candidates;
    match generate_files(&spec, &cli.out_dir) {
        Ok(files) => {
            println!(
                "toygen: {} train + {} eval entities under {}",
                cli.train_entities,
                cli.eval_entities,
                cli.out_dir.display()
            );
            println!("  collection    {}", files.collection.display());
            println!("  queries(train) {}", files.train_queries.display());
            println!("  queries(eval)  {}", files.eval_queries.display());
            println!("  triples       {}", files.triples.display());
            println!("  qrels         {}", files.qrels.display());
            println!("  bm25 run      {}", files.bm25_run.display());
            println!(
                "  suggested min_frequency: {}",
                spec.recommended_min_frequency()
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("genrank-toygen: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
