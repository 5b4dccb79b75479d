//! The seven batch subcommands. Each validates its inputs before touching
//! outputs and writes results atomically under `out/<tag>/`.

use std::path::PathBuf;

use crate::cli::config::{require, require_existing, ExperimentConfig};
use crate::cli::write_atomic;
use crate::cutoff::{self, CutoffInstance, EvalOptions};
use crate::error::{Error, Result};
use crate::metrics;
use crate::model::{
    load_checkpoint, save_checkpoint, GenerativeModel, TrainMeta,
};
use crate::score::{self, RankedEntry, RankedList};
use crate::text::{
    encode_triples, encode_with_extension, load_collection, load_qrels, load_queries, load_run,
    load_triples, tokenize, write_run, CandidateRun, Vocabulary,
};
use crate::train::{self, TrainOptions};
use crate::uncertainty::{self, RelevanceUncertaintyRow, UncertaintyAggregates};

/// Build the vocabulary from the collection plus (when given) the training
/// queries, and write it to the vocab path.
pub fn cmd_build_vocab(cfg: &ExperimentConfig) -> Result<()> {
    let collection_path = require(&cfg.collection, "collection")?;
    let queries_path = match &cfg.queries {
        Some(p) => Some(require_existing(p.clone(), "queries file")?),
        None => None,
    };
    let collection = load_collection(&collection_path)?;
    let mut streams: Vec<Vec<String>> = collection.iter().map(|(_, t)| tokenize(t)).collect();
    if let Some(qp) = queries_path {
        let queries = load_queries(&qp)?;
        streams.extend(queries.iter().map(|(_, t)| tokenize(t)));
    }
    if collection.is_empty() {
        eprintln!("warning: empty collection, vocabulary holds only the specials");
    }
    let refs: Vec<&[String]> = streams.iter().map(|s| s.as_slice()).collect();
    let vocab = Vocabulary::build(refs.iter().copied(), cfg.min_frequency)?;
    let path = cfg.vocab_path();
    vocab.save(&path)?;
    println!(
        "build-vocab: {} terms (min_frequency {}) -> {}",
        vocab.len(),
        cfg.min_frequency,
        path.display()
    );
    Ok(())
}

/// Train a model on the triples file and write per-epoch checkpoints plus
/// `final.ckpt`.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<()> {
    let vocab = Vocabulary::load(&require_existing(cfg.vocab_path(), "vocabulary")?)?;
    let collection = load_collection(&require(&cfg.collection, "collection")?)?;
    let queries = load_queries(&require(&cfg.queries, "queries")?)?;
    let raw = load_triples(&require(&cfg.triples, "triples")?)?;
    let triples = encode_triples(&raw, &collection, &queries, &vocab)?;

    let mut model = GenerativeModel::new(cfg.model_config(vocab.len()))?;
    let opts = TrainOptions {
        epochs: cfg.epochs,
        lr: cfg.effective_lr(),
        batch_size: cfg.batch_size,
        clip_norm: cfg.clip_norm,
        seed: cfg.seed,
        checkpoint_dir: Some(cfg.checkpoints_dir()),
        log_path: Some(cfg.reports_dir().join("train.log")),
        log_stdout: true,
    };
    let report = train::train(&mut model, &triples, &vocab, cfg.loss, &opts)?;
    let meta = TrainMeta {
        epoch: cfg.epochs as u64,
        loss: cfg.loss.name().into(),
        seed: cfg.seed,
    };
    let final_path = cfg.checkpoints_dir().join("final.ckpt");
    save_checkpoint(&final_path, &model, &meta)?;
    println!(
        "train: {} {} on {} triples, final accuracy {:.4} -> {}",
        cfg.architecture,
        cfg.loss,
        triples.len(),
        report.final_accuracy(),
        final_path.display()
    );
    Ok(())
}

fn load_model(cfg: &ExperimentConfig) -> Result<(GenerativeModel, TrainMeta)> {
    load_checkpoint(&require_existing(cfg.checkpoint_path(), "checkpoint")?)
}

/// Re-rank the candidate run with the trained model; emits a TREC run
/// tagged `<architecture>-<loss>`.
pub fn cmd_rerank(cfg: &ExperimentConfig) -> Result<()> {
    let vocab = Vocabulary::load(&require_existing(cfg.vocab_path(), "vocabulary")?)?;
    let collection = load_collection(&require(&cfg.collection, "collection")?)?;
    let queries = load_queries(&require(&cfg.eval_queries, "eval_queries")?)?;
    let run = load_run(&require(&cfg.run, "run")?)?;
    let (model, meta) = load_model(cfg)?;

    let mut lists = Vec::new();
    for qid in run.query_ids() {
        let query_text = queries.text(qid).ok_or_else(|| {
            Error::Contract(format!("run names query {qid} missing from eval_queries"))
        })?;
        let candidates = run.candidates(qid).expect("query ids come from the run");
        let ranked = score::rerank(
            &model,
            qid,
            query_text,
            candidates,
            &collection,
            &vocab,
            Some(cfg.nucleus_p),
        )?;
        lists.push((qid.to_string(), ranked.run_entries()));
    }
    let tag = format!("{}-{}", model.config.architecture, meta.loss);
    let out = cfg.runs_dir().join("rerank.run");
    write_run(&out, &lists, &tag)?;
    println!("rerank: {} queries -> {}", lists.len(), out.display());
    Ok(())
}

/// Ranked lists straight from a run file (no profiles).
fn lists_from_run(run: &CandidateRun) -> Vec<RankedList> {
    run.query_ids()
        .map(|qid| RankedList {
            query_id: qid.to_string(),
            entries: run
                .candidates(qid)
                .expect("query ids come from the run")
                .iter()
                .map(|e| RankedEntry {
                    doc_id: e.doc_id.clone(),
                    score: e.score,
                    grade: None,
                    aggregates: None,
                    profile: None,
                })
                .collect(),
        })
        .collect()
}

/// Evaluate a run against qrels; with a baseline run, also paired t-tests
/// per metric.
pub fn cmd_eval(cfg: &ExperimentConfig) -> Result<()> {
    let run = load_run(&require(&cfg.run, "run")?)?;
    let qrels = load_qrels(&require(&cfg.qrels, "qrels")?)?;
    let lists = lists_from_run(&run);
    let report = metrics::evaluate_lists(&lists, &qrels, cfg.mrr_cutoff, cfg.recall_depth_option());
    if report.skipped > 0 {
        eprintln!(
            "warning: {} queries without usable judgments were skipped",
            report.skipped
        );
    }
    let report_path = cfg.reports_dir().join("eval.tsv");
    metrics::write_metric_report(&report_path, &report)?;
    metrics::write_per_query_csv(&cfg.csv_dir().join("eval_per_query.csv"), &report)?;
    println!(
        "eval: {} queries, mrr {:.4}, ndcg@10 {:.4}, recall {:.4} -> {}",
        report.query_count(),
        report.mean_mrr,
        report.mean_ndcg,
        report.mean_recall,
        report_path.display()
    );

    if let Some(baseline_path) = &cfg.baseline_run {
        let baseline_run = load_run(&require_existing(baseline_path.clone(), "baseline run")?)?;
        let baseline = metrics::evaluate_lists(
            &lists_from_run(&baseline_run),
            &qrels,
            cfg.mrr_cutoff,
            cfg.recall_depth_option(),
        );
        let ours: std::collections::HashMap<&str, (f64, f64, f64)> = report
            .per_query
            .iter()
            .map(|(q, m, n, r)| (q.as_str(), (*m, *n, *r)))
            .collect();
        let mut a_mrr = Vec::new();
        let mut b_mrr = Vec::new();
        let mut a_ndcg = Vec::new();
        let mut b_ndcg = Vec::new();
        let mut a_rec = Vec::new();
        let mut b_rec = Vec::new();
        for (qid, m, n, r) in &baseline.per_query {
            if let Some(&(m2, n2, r2)) = ours.get(qid.as_str()) {
                a_mrr.push(m2);
                b_mrr.push(*m);
                a_ndcg.push(n2);
                b_ndcg.push(*n);
                a_rec.push(r2);
                b_rec.push(*r);
            }
        }
        let mut out = String::from("metric\tt\tp\n");
        for (name, a, b) in [
            ("mrr", &a_mrr, &b_mrr),
            ("ndcg@10", &a_ndcg, &b_ndcg),
            ("recall", &a_rec, &b_rec),
        ] {
            match metrics::paired_t_test(a, b) {
                Ok((t, p)) => out.push_str(&format!("{name}\t{t:.6}\t{p:.6}\n")),
                Err(Error::Numeric(_)) => out.push_str(&format!("{name}\tdegenerate\tdegenerate\n")),
                Err(e) => return Err(e),
            }
        }
        let ttest_path = cfg.reports_dir().join("ttest.tsv");
        write_atomic(&ttest_path, out.as_bytes())?;
        println!("eval: paired t-test vs baseline -> {}", ttest_path.display());
    }
    Ok(())
}

/// Score every (query, candidate) pair of the run with nucleus-entropy
/// uncertainty and emit the two analysis CSVs.
pub fn cmd_uncertainty(cfg: &ExperimentConfig) -> Result<()> {
    let vocab = Vocabulary::load(&require_existing(cfg.vocab_path(), "vocabulary")?)?;
    let collection = load_collection(&require(&cfg.collection, "collection")?)?;
    let queries = load_queries(&require(&cfg.eval_queries, "eval_queries")?)?;
    let run = load_run(&require(&cfg.run, "run")?)?;
    let (model, _) = load_model(cfg)?;

    let mut rows: Vec<RelevanceUncertaintyRow> = Vec::new();
    let mut term_rows: Vec<Vec<f64>> = Vec::new();
    for qid in run.query_ids() {
        let query_text = queries.text(qid).ok_or_else(|| {
            Error::Contract(format!("run names query {qid} missing from eval_queries"))
        })?;
        for entry in run.candidates(qid).expect("query ids come from the run") {
            let doc_text = collection.text(&entry.doc_id).ok_or_else(|| {
                Error::Contract(format!("document {} missing from collection", entry.doc_id))
            })?;
            let profile = score::score_query_doc(
                &model,
                qid,
                query_text,
                &entry.doc_id,
                doc_text,
                &vocab,
                Some(cfg.nucleus_p),
            )?;
            let us = profile
                .term_uncertainties()
                .expect("uncertainty was requested");
            let aggregates = uncertainty::query_aggregates(&us)?;
            rows.push(RelevanceUncertaintyRow {
                query_id: qid.to_string(),
                doc_id: entry.doc_id.clone(),
                relevance_score: profile.score,
                aggregates,
            });
            term_rows.push(us);
        }
    }
    let rel_path = cfg.uncertainty_csv_path();
    uncertainty::write_relevance_uncertainty_csv(&rel_path, &rows)?;
    let stats = uncertainty::position_stats(&term_rows);
    let pos_path = cfg.csv_dir().join("position_uncertainty.csv");
    uncertainty::write_position_csv(&pos_path, &stats)?;
    println!(
        "uncertainty: {} pairs -> {} and {}",
        rows.len(),
        rel_path.display(),
        pos_path.display()
    );
    Ok(())
}

fn parse_uncertainty_csv(
    path: &PathBuf,
) -> Result<std::collections::HashMap<(String, String), (f64, UncertaintyAggregates)>> {
    let name = path.display().to_string();
    let text = std::fs::read_to_string(path)?;
    let mut out = std::collections::HashMap::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(Error::data(&name, i + 1, "expected 7 CSV fields"));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::data(&name, i + 1, format!("bad number {s:?}")))
        };
        out.insert(
            (fields[0].to_string(), fields[1].to_string()),
            (
                num(fields[2])?,
                UncertaintyAggregates {
                    mean: num(fields[3])?,
                    variance: num(fields[4])?,
                    max: num(fields[5])?,
                    entropy: num(fields[6])?,
                },
            ),
        );
    }
    Ok(out)
}

/// Cut-off experiment over the re-ranked run, joining the uncertainty CSV
/// for features and qrels for labels.
pub fn cmd_cutoff(cfg: &ExperimentConfig) -> Result<()> {
    let run = load_run(&require(&cfg.run, "run")?)?;
    let qrels = load_qrels(&require(&cfg.qrels, "qrels")?)?;
    let features = parse_uncertainty_csv(&require_existing(
        cfg.uncertainty_csv_path(),
        "uncertainty csv",
    )?)?;

    let mut instances = Vec::new();
    for qid in run.query_ids() {
        if !qrels.has_query(qid) {
            continue;
        }
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for entry in run.candidates(qid).expect("query ids come from the run") {
            let Some((score, agg)) = features.get(&(qid.to_string(), entry.doc_id.clone()))
            else {
                return Err(Error::Contract(format!(
                    "uncertainty csv lacks ({qid}, {})",
                    entry.doc_id
                )));
            };
            let mut row = vec![*score];
            row.extend_from_slice(&agg.as_array());
            rows.push(row);
            labels.push(qrels.grade(qid, &entry.doc_id).unwrap_or(0) >= 1);
        }
        instances.push(CutoffInstance::new(qid.to_string(), rows, labels)?);
    }

    let opts = EvalOptions {
        folds: cfg.cutoff_folds,
        trials: cfg.cutoff_trials,
        seed: cfg.seed,
        predictor_epochs: cfg.predictor_epochs,
        predictor_lr: cfg.predictor_lr,
    };
    let report = cutoff::evaluate(&instances, &opts)?;
    let mut table = report.table();
    table.push_str(&format!(
        "excluded_queries {}\ntrials {} folds {}\n",
        report.excluded_queries, cfg.cutoff_trials, cfg.cutoff_folds
    ));
    let report_path = cfg.reports_dir().join("cutoff.txt");
    write_atomic(&report_path, table.as_bytes())?;
    report.write_csv(&cfg.csv_dir().join("cutoff.csv"))?;
    print!("{table}");
    println!("cutoff: -> {}", report_path.display());
    Ok(())
}

/// Greedy query generation for every document in the collection.
pub fn cmd_generate(cfg: &ExperimentConfig) -> Result<()> {
    let vocab = Vocabulary::load(&require_existing(cfg.vocab_path(), "vocabulary")?)?;
    let collection = load_collection(&require(&cfg.collection, "collection")?)?;
    let (model, _) = load_model(cfg)?;

    let mut out = String::new();
    for (doc_id, text) in collection.iter() {
        let doc_tokens = crate::text::truncate_doc(tokenize(text));
        if doc_tokens.is_empty() {
            continue;
        }
        let ids = model.greedy_generate(&doc_tokens, &vocab, cfg.max_len)?;
        let (_, _, ext) = encode_with_extension(&doc_tokens, &vocab);
        let words: Vec<&str> = ids
            .iter()
            .map(|&id| ext.term(&vocab, id).unwrap_or("<unk>"))
            .collect();
        out.push_str(&format!("{doc_id}\t{}\n", words.join(" ")));
    }
    let path = cfg.reports_dir().join("generated_queries.tsv");
    write_atomic(&path, out.as_bytes())?;
    println!("generate: {} documents -> {}", collection.len(), path.display());
    Ok(())
}

