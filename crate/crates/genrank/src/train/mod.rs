//! Pairwise training over (query, D+, D-) triples.
//!
//! Per-triple gradients accumulate over a batch, the global norm is clipped,
//! and Adam updates the parameters in place. Shuffling, dropout, and
//! initialization all draw from seeded streams, so a (config, seed) pair
//! fixes the whole run.

mod loss;

use std::io::Write as _;
use std::path::PathBuf;
use std::time::{Duration, Instant};

pub use loss::{log1mexp, loss_on_tape, margin_loss, nl3u_loss, nll_loss, LossKind};

use crate::autodiff::{adam_step, AdamConfig, AdamState, Tape, Tensor};
use crate::error::{Error, Result};
use crate::model::{pass_log_prob, save_checkpoint, Architecture, Dropout, GenerativeModel, TrainMeta};
use crate::text::{TrainingTriple, Vocabulary};

/// Learning-rate defaults: 0.001 for the LSTM family, 0.0001 for
/// transformer-based models.
pub fn default_lr(arch: Architecture) -> f64 {
    if arch.uses_transformer() {
        1e-4
    } else {
        1e-3
    }
}

#[derive(Clone, Debug)]
pub struct TrainOptions {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// Global gradient-norm clip.
    pub clip_norm: f64,
    pub seed: u64,
    /// When set, a checkpoint is written each epoch.
    pub checkpoint_dir: Option<PathBuf>,
    /// When set, the per-epoch log is also written here.
    pub log_path: Option<PathBuf>,
    pub log_stdout: bool,
}

impl TrainOptions {
    pub fn new(epochs: usize, lr: f64, seed: u64) -> Self {
        TrainOptions {
            epochs,
            lr,
            batch_size: 32,
            clip_norm: 2.0,
            seed,
            checkpoint_dir: None,
            log_path: None,
            log_stdout: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub pairwise_accuracy: f64,
}

#[derive(Clone, Debug, Default)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub wall_time: Duration,
}

impl TrainReport {
    pub fn final_accuracy(&self) -> f64 {
        self.epochs.last().map(|e| e.pairwise_accuracy).unwrap_or(0.0)
    }

    pub fn best_accuracy(&self) -> f64 {
        self.epochs
            .iter()
            .map(|e| e.pairwise_accuracy)
            .fold(0.0, f64::max)
    }
}

pub(crate) struct TripleStats {
    pub loss: f64,
}

/// Forward + backward for one triple; `grads` accumulates `scale` · dL/dθ.
/// NLL never touches the negative document.
pub(crate) fn triple_grads(
    model: &GenerativeModel,
    dropout: Option<&Dropout>,
    triple: &TrainingTriple,
    kind: LossKind,
    vocab: &Vocabulary,
    scale: f64,
    grads: &mut [Tensor],
) -> Result<TripleStats> {
    let tape = Tape::new();
    let net = model.net_ctx(&tape, dropout);
    let pos = model.scored_pass(&net, &triple.doc_pos_tokens, &triple.query_tokens, vocab)?;
    let lp_pos = pass_log_prob(&pos)?;
    let lp_neg = if kind.needs_negative() {
        let neg = model.scored_pass(&net, &triple.doc_neg_tokens, &triple.query_tokens, vocab)?;
        Some(pass_log_prob(&neg)?)
    } else {
        None
    };
    let loss = loss_on_tape(kind, lp_pos, lp_neg)?.scale(scale);
    tape.backward(loss)?;
    for (g, var) in grads.iter_mut().zip(net.params.vars()) {
        let contribution = var.grad();
        for (a, b) in g.data_mut().iter_mut().zip(contribution.data()) {
            *a += b;
        }
    }
    Ok(TripleStats {
        loss: loss.scalar_value() / scale,
    })
}

/// Loss value and per-parameter gradients for one triple, aligned with
/// `model.params`. Exists so gradients can be checked externally against
/// finite differences of [`triple_loss_value`].
pub fn triple_loss_and_grads(
    model: &GenerativeModel,
    triple: &TrainingTriple,
    kind: LossKind,
    vocab: &Vocabulary,
) -> Result<(f64, Vec<Tensor>)> {
    let mut grads: Vec<Tensor> = model
        .params
        .tensors()
        .iter()
        .map(|t| Tensor::zeros(t.shape().to_vec()))
        .collect();
    let stats = triple_grads(model, None, triple, kind, vocab, 1.0, &mut grads)?;
    Ok((stats.loss, grads))
}

/// The same loss evaluated without recording backward rules.
pub fn triple_loss_value(
    model: &GenerativeModel,
    triple: &TrainingTriple,
    kind: LossKind,
    vocab: &Vocabulary,
) -> Result<f64> {
    let tape = Tape::inference();
    let net = model.net_ctx(&tape, None);
    let pos = model.scored_pass(&net, &triple.doc_pos_tokens, &triple.query_tokens, vocab)?;
    let lp_pos = pass_log_prob(&pos)?;
    let lp_neg = if kind.needs_negative() {
        let neg = model.scored_pass(&net, &triple.doc_neg_tokens, &triple.query_tokens, vocab)?;
        Some(pass_log_prob(&neg)?)
    } else {
        None
    };
    Ok(loss_on_tape(kind, lp_pos, lp_neg)?.scalar_value())
}

/// Teacher-forced `score(Q, D)` as a plain value (no gradients).
pub fn sequence_score(
    model: &GenerativeModel,
    doc_tokens: &[String],
    query_tokens: &[String],
    vocab: &Vocabulary,
) -> Result<f64> {
    let tape = Tape::inference();
    let net = model.net_ctx(&tape, None);
    let pass = model.scored_pass(&net, doc_tokens, query_tokens, vocab)?;
    Ok(pass_log_prob(&pass)?.scalar_value())
}

/// Fraction of triples ranked correctly: score(Q, D+) > score(Q, D-).
pub fn pairwise_accuracy(
    model: &GenerativeModel,
    triples: &[TrainingTriple],
    vocab: &Vocabulary,
) -> Result<f64> {
    if triples.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    for t in triples {
        let pos = sequence_score(model, &t.doc_pos_tokens, &t.query_tokens, vocab)?;
        let neg = sequence_score(model, &t.doc_neg_tokens, &t.query_tokens, vocab)?;
        if pos > neg {
            correct += 1;
        }
    }
    Ok(correct as f64 / triples.len() as f64)
}

fn clip_global_norm(grads: &mut [Tensor], clip: f64) {
    if clip <= 0.0 {
        return;
    }
    let sq: f64 = grads
        .iter()
        .map(|g| g.data().iter().map(|v| v * v).sum::<f64>())
        .sum();
    let norm = sq.sqrt();
    if norm > clip {
        let s = clip / norm;
        for g in grads {
            for v in g.data_mut() {
                *v *= s;
            }
        }
    }
}

/// Train in place over `triples`. Deterministic for a fixed seed; aborts
/// with a diagnostic if the loss turns non-finite.
pub fn train(
    model: &mut GenerativeModel,
    triples: &[TrainingTriple],
    vocab: &Vocabulary,
    kind: LossKind,
    opts: &TrainOptions,
) -> Result<TrainReport> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    if triples.is_empty() {
        return Err(Error::EmptySequence("training needs at least one triple".into()));
    }
    kind.validate()?;
    let start = Instant::now();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(opts.seed);
    let dropout = Dropout::new(model.config.dropout, opts.seed.wrapping_add(1));
    let mut adam = AdamState::for_params(model.params.tensors());
    let adam_cfg = AdamConfig::with_lr(opts.lr);
    let mut report = TrainReport::default();
    let mut log_lines = String::new();

    let mut order: Vec<usize> = (0..triples.len()).collect();
    for epoch in 1..=opts.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (batch_idx, batch) in order.chunks(opts.batch_size).enumerate() {
            let mut grads: Vec<Tensor> = model
                .params
                .tensors()
                .iter()
                .map(|t| Tensor::zeros(t.shape().to_vec()))
                .collect();
            let scale = 1.0 / batch.len() as f64;
            for &ti in batch {
                let stats = triple_grads(
                    model,
                    dropout.as_ref(),
                    &triples[ti],
                    kind,
                    vocab,
                    scale,
                    &mut grads,
                )?;
                if !stats.loss.is_finite() {
                    return Err(Error::Numeric(format!(
                        "loss diverged at epoch {epoch}, batch {batch_idx}, triple {ti} \
                         (query {})",
                        triples[ti].query_id
                    )));
                }
                epoch_loss += stats.loss;
            }
            clip_global_norm(&mut grads, opts.clip_norm);
            adam_step(model.params.tensors_mut(), &grads, &mut adam, &adam_cfg)?;
        }
        let mean_loss = epoch_loss / triples.len() as f64;
        let accuracy = pairwise_accuracy(model, triples, vocab)?;
        let line = format!("{epoch}\t{mean_loss:.6}\t{accuracy:.6}");
        if opts.log_stdout {
            println!("{line}");
            std::io::stdout().flush().ok();
        }
        log_lines.push_str(&line);
        log_lines.push('\n');
        if let Some(dir) = &opts.checkpoint_dir {
            let meta = TrainMeta {
                epoch: epoch as u64,
                loss: kind.name().into(),
                seed: opts.seed,
            };
            save_checkpoint(&dir.join(format!("epoch_{epoch:04}.ckpt")), model, &meta)?;
        }
        report.epochs.push(EpochStats {
            epoch,
            mean_loss,
            pairwise_accuracy: accuracy,
        });
    }
    if let Some(path) = &opts.log_path {
        crate::cli::write_atomic(path, log_lines.as_bytes())?;
    }
    report.wall_time = start.elapsed();
    Ok(report)
}
