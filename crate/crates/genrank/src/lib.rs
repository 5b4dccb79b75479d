//! Generative re-ranking for passage retrieval.
//!
//! Documents are ranked by the teacher-forced probability of generating the
//! query from the document: an encoder-decoder model reads the passage and
//! the relevance score is the sum of per-position log-probabilities of the
//! query tokens (including `<EOS>`). Four architectures are provided
//! (`seq2seq_attention`, `pgn`, `transf2transf`, `t_pgn`); the PGN family
//! uses a pointer-generator copy mechanism so document out-of-vocabulary
//! terms can receive generation probability.
//!
//! Because scoring is probabilistic, every generation step also yields an
//! uncertainty estimate (entropy of the nucleus distribution), which feeds
//! query-level aggregates, correlation analysis, and a learned ranked-list
//! cut-off predictor.
//!
//! Module map:
//!
//! - [`autodiff`] — reverse-mode automatic differentiation over dense `f64`
//!   tensors, plus the Adam optimizer and a finite-difference gradient checker.
//! - [`text`] — tokenization, vocabulary with per-document OOV extension, and
//!   TSV/TREC file ingestion.
//! - [`model`] — the four encoder-decoder architectures and checkpointing.
//! - [`train`] — NLL / margin / unlikelihood losses and the training loop.
//! - [`score`] — query-likelihood scoring, BM25 candidate generation, and
//!   re-ranking.
//! - [`uncertainty`] — nucleus-entropy term uncertainty, query-level
//!   aggregation, Spearman correlation, position statistics.
//! - [`metrics`] — MRR, NDCG@10, Recall, and the paired t-test.
//! - [`cutoff`] — F1 ranked-list cut-off: oracle, greedy, and a learned
//!   attention-based predictor.
//! - [`toy`] — a synthetic corpus generator so the full pipeline runs offline.
//! - [`cli`] — configuration and the batch subcommands.

pub mod autodiff;
pub mod cli;
pub mod cutoff;
pub mod error;
pub mod metrics;
pub mod model;
pub mod score;
pub mod text;
pub mod toy;
pub mod train;
pub mod uncertainty;

pub use error::{Error, Result};
