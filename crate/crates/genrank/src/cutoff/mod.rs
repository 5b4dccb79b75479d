//! Dynamic ranked-list cut-off prediction maximizing F1.
//!
//! A ranked list is truncated at rank k; precision/recall of the kept
//! prefix give F1(k), which is non-monotonic in k. The oracle picks the
//! per-list best k, the greedy baseline one global k from training data,
//! and the learned predictor scores positions with a small self-attention
//! network over per-rank features.

mod evaluate;
mod predictor;

pub use evaluate::{evaluate, CutoffReport, EvalOptions, FoldResult, Method};
pub use predictor::{train_predictor, CutoffPredictor, PredictorConfig};

use crate::error::{Error, Result};

/// Feature channels: relevance alone, or relevance plus the four
/// query-level uncertainty aggregates of each ranked document.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureSet {
    Rel,
    RelUncertainty,
}

impl FeatureSet {
    pub fn width(&self) -> usize {
        match self {
            FeatureSet::Rel => 1,
            FeatureSet::RelUncertainty => 5,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FeatureSet::Rel => "rel",
            FeatureSet::RelUncertainty => "rel+uncertainty",
        }
    }

    /// Project full-width feature rows down to this set's channels.
    pub fn project(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        match self {
            FeatureSet::Rel => rows.iter().map(|r| vec![r[0]]).collect(),
            FeatureSet::RelUncertainty => rows.iter().map(|r| r[..5].to_vec()).collect(),
        }
    }
}

/// One query's ranked list as the cut-off task sees it: per-rank feature
/// rows (channel 0 = relevance score, 1–4 = uncertainty aggregates) and
/// binary labels, ordered by the ranker's scores.
#[derive(Clone, Debug)]
pub struct CutoffInstance {
    pub query_id: String,
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<bool>,
}

impl CutoffInstance {
    pub fn new(query_id: String, features: Vec<Vec<f64>>, labels: Vec<bool>) -> Result<Self> {
        if features.len() != labels.len() || features.is_empty() {
            return Err(Error::Contract(format!(
                "cutoff instance {query_id}: {} feature rows vs {} labels",
                features.len(),
                labels.len()
            )));
        }
        let width = features[0].len();
        if width < 5 || features.iter().any(|r| r.len() != width) {
            return Err(Error::Contract(format!(
                "cutoff instance {query_id}: feature rows must all have ≥ 5 channels"
            )));
        }
        Ok(CutoffInstance {
            query_id,
            features,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn relevant_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }
}

/// F1 of keeping the top `k` of `labels`. Lists with no relevant document
/// get 0 at every k.
pub fn f1_at(labels: &[bool], k: usize) -> Result<f64> {
    if k < 1 || k > labels.len() {
        return Err(Error::Contract(format!(
            "cutoff {k} out of range for a list of {}",
            labels.len()
        )));
    }
    let total: usize = labels.iter().filter(|&&l| l).count();
    if total == 0 {
        return Ok(0.0);
    }
    let hits = labels[..k].iter().filter(|&&l| l).count();
    if hits == 0 {
        return Ok(0.0);
    }
    let precision = hits as f64 / k as f64;
    let recall = hits as f64 / total as f64;
    Ok(2.0 * precision * recall / (precision + recall))
}

/// Best-possible cutoff: argmax of [`f1_at`] over k, smallest k on ties.
pub fn oracle_cutoff(labels: &[bool]) -> Result<(usize, f64)> {
    if labels.is_empty() {
        return Err(Error::EmptySequence("oracle_cutoff on an empty list".into()));
    }
    let mut best = (1usize, f1_at(labels, 1)?);
    for k in 2..=labels.len() {
        let f1 = f1_at(labels, k)?;
        if f1 > best.1 {
            best = (k, f1);
        }
    }
    Ok(best)
}

/// One global cutoff maximizing mean training F1 (clamped per list to its
/// length); smallest k on ties.
pub fn greedy_cutoff(train: &[CutoffInstance]) -> Result<usize> {
    if train.is_empty() {
        return Err(Error::EmptySequence("greedy_cutoff with no training lists".into()));
    }
    let max_len = train.iter().map(|i| i.len()).max().unwrap();
    let mut best_k = 1;
    let mut best_f1 = f64::NEG_INFINITY;
    for k in 1..=max_len {
        let mut sum = 0.0;
        for inst in train {
            sum += f1_at(&inst.labels, k.min(inst.len()))?;
        }
        let mean = sum / train.len() as f64;
        if mean > best_f1 {
            best_f1 = mean;
            best_k = k;
        }
    }
    Ok(best_k)
}
