//! Relevance scoring and re-ranking.
//!
//! `score(Q, D)` is the sum over query positions (terminator included) of
//! the log-probability the model assigns to the next query token under
//! teacher forcing. Generation-step probabilities are floored at 1e-12 so a
//! score is never -inf; the floor sets a flag that well-behaved data must
//! never trip.

mod bm25;
mod ql;

pub use bm25::Bm25Index;
pub use ql::CollectionLM;

use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::model::GenerativeModel;
use crate::text::{tokenize, truncate_doc, truncate_query, Collection, RunEntry, Vocabulary};
use crate::uncertainty::{self, UncertaintyAggregates};

pub const PROB_FLOOR: f64 = 1e-12;

/// Per-position record of one teacher-forced scoring pass.
#[derive(Clone, Debug)]
pub struct ProfileStep {
    /// Extended-vocabulary id that was scored at this position.
    pub token_id: u32,
    pub log_prob: f64,
    /// Term-level nucleus entropy, filled when requested.
    pub uncertainty: Option<f64>,
}

/// The bridge from scoring to uncertainty analysis: everything one (query,
/// document) pass produced.
#[derive(Clone, Debug)]
pub struct GenerationProfile {
    pub query_id: String,
    pub doc_id: String,
    pub steps: Vec<ProfileStep>,
    /// Sum of per-position log-probabilities.
    pub score: f64,
    /// True when any step probability hit the floor.
    pub floored: bool,
}

impl GenerationProfile {
    pub fn term_uncertainties(&self) -> Option<Vec<f64>> {
        self.steps.iter().map(|s| s.uncertainty).collect()
    }

    pub fn aggregates(&self) -> Option<UncertaintyAggregates> {
        let us = self.term_uncertainties()?;
        uncertainty::query_aggregates(&us).ok()
    }
}

/// One re-ranked candidate.
#[derive(Clone, Debug)]
pub struct RankedEntry {
    pub doc_id: String,
    pub score: f64,
    pub grade: Option<u32>,
    pub aggregates: Option<UncertaintyAggregates>,
    pub profile: Option<GenerationProfile>,
}

/// Candidates of one query ordered by relevance score (ties by doc id).
#[derive(Clone, Debug)]
pub struct RankedList {
    pub query_id: String,
    pub entries: Vec<RankedEntry>,
}

impl RankedList {
    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.doc_id.as_str())
    }

    pub fn run_entries(&self) -> Vec<RunEntry> {
        self.entries
            .iter()
            .map(|e| RunEntry {
                doc_id: e.doc_id.clone(),
                score: e.score,
            })
            .collect()
    }
}

/// Teacher-forced score of a (query, document) pair. When `nucleus_p` is
/// set, each step's nucleus entropy is recorded in the profile.
pub fn score_query_doc(
    model: &GenerativeModel,
    query_id: &str,
    query_text: &str,
    doc_id: &str,
    doc_text: &str,
    vocab: &Vocabulary,
    nucleus_p: Option<f64>,
) -> Result<GenerationProfile> {
    let query_tokens = truncate_query(tokenize(query_text));
    if query_tokens.is_empty() {
        return Err(Error::EmptySequence(format!(
            "query {query_id} tokenizes to nothing"
        )));
    }
    let doc_tokens = truncate_doc(tokenize(doc_text));
    if doc_tokens.is_empty() {
        return Err(Error::EmptySequence(format!(
            "document {doc_id} tokenizes to nothing"
        )));
    }
    let tape = Tape::inference();
    let net = model.net_ctx(&tape, None);
    let pass = model.scored_pass(&net, &doc_tokens, &query_tokens, vocab)?;

    let mut steps = Vec::with_capacity(pass.targets.len());
    let mut score = 0.0;
    let mut floored = false;
    for (step, &target) in pass.steps.iter().zip(&pass.targets) {
        let dist = step.final_dist.value().into_data();
        let mut p = dist[target];
        if p < PROB_FLOOR {
            p = PROB_FLOOR;
            floored = true;
        }
        let log_prob = p.ln();
        score += log_prob;
        let uncertainty = match nucleus_p {
            None => None,
            Some(top_p) => Some(uncertainty::term_uncertainty(&uncertainty::nucleus(
                &dist, top_p,
            )?)),
        };
        steps.push(ProfileStep {
            token_id: target as u32,
            log_prob,
            uncertainty,
        });
    }
    Ok(GenerationProfile {
        query_id: query_id.to_string(),
        doc_id: doc_id.to_string(),
        steps,
        score,
        floored,
    })
}

/// Re-rank a candidate slice by generative score, descending; ties break by
/// doc id ascending. Output doc ids are a permutation of the input's.
pub fn rerank(
    model: &GenerativeModel,
    query_id: &str,
    query_text: &str,
    candidates: &[RunEntry],
    collection: &Collection,
    vocab: &Vocabulary,
    nucleus_p: Option<f64>,
) -> Result<RankedList> {
    if candidates.is_empty() {
        return Err(Error::EmptySequence(format!(
            "no candidates to re-rank for query {query_id}"
        )));
    }
    let mut entries = Vec::with_capacity(candidates.len());
    for cand in candidates {
        let doc_text = collection.text(&cand.doc_id).ok_or_else(|| {
            Error::Contract(format!(
                "candidate document {} is missing from the collection",
                cand.doc_id
            ))
        })?;
        let profile = score_query_doc(
            model,
            query_id,
            query_text,
            &cand.doc_id,
            doc_text,
            vocab,
            nucleus_p,
        )?;
        entries.push(RankedEntry {
            doc_id: cand.doc_id.clone(),
            score: profile.score,
            grade: None,
            aggregates: profile.aggregates(),
            profile: Some(profile),
        });
    }
    entries.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.doc_id.cmp(&b.doc_id))
    });
    Ok(RankedList {
        query_id: query_id.to_string(),
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Architecture, ModelConfig};

    fn words(ws: &[&str]) -> Vec<String> {
        ws.iter().map(|w| w.to_string()).collect()
    }

    fn fixture() -> (Vocabulary, GenerativeModel, Collection) {
        let docs = [
            words(&["rivers", "flow", "toward", "the", "sea"]),
            words(&["stars", "burn", "in", "the", "night"]),
        ];
        let streams: Vec<&[String]> = docs.iter().map(|d| d.as_slice()).collect();
        let vocab = Vocabulary::build(streams.iter().copied(), 1).unwrap();
        let model =
            GenerativeModel::new(ModelConfig::tiny(Architecture::TPgn, vocab.len(), 31)).unwrap();
        let mut collection = Collection::default();
        collection
            .insert("d1".into(), "rivers flow toward the sea".into())
            .unwrap();
        collection
            .insert("d2".into(), "stars burn in the night".into())
            .unwrap();
        (vocab, model, collection)
    }

    #[test]
    fn score_is_sum_of_step_log_probs() {
        let (vocab, model, _) = fixture();
        let profile = score_query_doc(
            &model,
            "q",
            "where do rivers flow",
            "d1",
            "rivers flow toward the sea",
            &vocab,
            Some(0.95),
        )
        .unwrap();
        let total: f64 = profile.steps.iter().map(|s| s.log_prob).sum();
        assert!((profile.score - total).abs() < 1e-9);
        assert_eq!(profile.steps.len(), 5); // four terms + <eos>
        assert!(!profile.floored);
        assert!(profile.score < 0.0);
        assert!(profile.aggregates().is_some());
    }

    #[test]
    fn hand_computed_log_sum() {
        let probs = [0.5, 0.25, 0.8];
        let score: f64 = probs.iter().map(|p: &f64| p.ln()).sum();
        assert!((score + 2.3026).abs() < 1e-4);
    }

    #[test]
    fn longer_query_scores_strictly_lower() {
        let (vocab, model, _) = fixture();
        let short = score_query_doc(
            &model, "q", "rivers flow", "d1", "rivers flow toward the sea", &vocab, None,
        )
        .unwrap();
        let long = score_query_doc(
            &model,
            "q",
            "rivers flow toward",
            "d1",
            "rivers flow toward the sea",
            &vocab,
            None,
        )
        .unwrap();
        assert!(long.score < short.score);
    }

    #[test]
    fn scoring_is_deterministic() {
        let (vocab, model, _) = fixture();
        let a = score_query_doc(&model, "q", "stars burn", "d2", "stars burn in the night", &vocab, None)
            .unwrap();
        let b = score_query_doc(&model, "q", "stars burn", "d2", "stars burn in the night", &vocab, None)
            .unwrap();
        assert_eq!(a.score.to_bits(), b.score.to_bits());
    }

    #[test]
    fn exp_of_score_matches_product_of_step_probs() {
        let (vocab, model, _) = fixture();
        let profile = score_query_doc(
            &model, "q", "night stars", "d2", "stars burn in the night", &vocab, None,
        )
        .unwrap();
        let product: f64 = profile.steps.iter().map(|s| s.log_prob.exp()).product();
        let rel = ((profile.score.exp() - product) / product).abs();
        assert!(rel < 1e-6, "relative gap {rel}");
    }

    #[test]
    fn rerank_sorts_and_preserves_the_candidate_set() {
        let (vocab, model, collection) = fixture();
        let candidates = vec![
            RunEntry {
                doc_id: "d2".into(),
                score: 9.0,
            },
            RunEntry {
                doc_id: "d1".into(),
                score: 8.0,
            },
        ];
        let ranked = rerank(
            &model,
            "q1",
            "where do rivers flow",
            &candidates,
            &collection,
            &vocab,
            None,
        )
        .unwrap();
        let mut ids: Vec<&str> = ranked.doc_ids().collect();
        ids.sort();
        assert_eq!(ids, vec!["d1", "d2"]);
        assert!(ranked.entries[0].score >= ranked.entries[1].score);
    }

    #[test]
    fn rerank_missing_document_names_it() {
        let (vocab, model, collection) = fixture();
        let candidates = vec![RunEntry {
            doc_id: "ghost".into(),
            score: 1.0,
        }];
        let err = rerank(&model, "q1", "stars", &candidates, &collection, &vocab, None)
            .unwrap_err()
            .to_string();
        assert!(err.contains("ghost"), "{err}");
    }

    #[test]
    fn single_candidate_gets_rank_one() {
        let (vocab, model, collection) = fixture();
        let candidates = vec![RunEntry {
            doc_id: "d1".into(),
            score: 0.0,
        }];
        let ranked =
            rerank(&model, "q1", "stars burn", &candidates, &collection, &vocab, None).unwrap();
        assert_eq!(ranked.entries.len(), 1);
        assert_eq!(ranked.entries[0].doc_id, "d1");
    }
}
