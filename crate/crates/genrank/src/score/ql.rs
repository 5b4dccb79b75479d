//! Classical query likelihood with Dirichlet smoothing.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::score::PROB_FLOOR;
use crate::text::{tokenize, Collection};

/// Unigram collection statistics: P(w|C), per-document term counts and
/// lengths, and the smoothing mass μ.
#[derive(Clone, Debug)]
pub struct CollectionLM {
    collection_prob: HashMap<String, f64>,
    doc_counts: HashMap<String, HashMap<String, usize>>,
    doc_lens: HashMap<String, usize>,
    mu: f64,
}

impl CollectionLM {
    pub fn build(collection: &Collection, mu: f64) -> Result<Self> {
        if mu <= 0.0 {
            return Err(Error::Contract(format!("μ must be positive, got {mu}")));
        }
        let mut term_totals: HashMap<String, usize> = HashMap::new();
        let mut doc_counts = HashMap::new();
        let mut doc_lens = HashMap::new();
        let mut total = 0usize;
        for (doc_id, text) in collection.iter() {
            let tokens = tokenize(text);
            let mut counts: HashMap<String, usize> = HashMap::new();
            for tok in &tokens {
                *counts.entry(tok.clone()).or_insert(0) += 1;
                *term_totals.entry(tok.clone()).or_insert(0) += 1;
            }
            total += tokens.len();
            doc_lens.insert(doc_id.to_string(), tokens.len());
            doc_counts.insert(doc_id.to_string(), counts);
        }
        let collection_prob = term_totals
            .into_iter()
            .map(|(t, n)| (t, n as f64 / total.max(1) as f64))
            .collect();
        Ok(CollectionLM {
            collection_prob,
            doc_counts,
            doc_lens,
            mu,
        })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn background(&self, term: &str) -> f64 {
        self.collection_prob.get(term).copied().unwrap_or(0.0)
    }

    /// Check Σ_w P(w|C) = 1 (up to rounding).
    pub fn background_mass(&self) -> f64 {
        self.collection_prob.values().sum()
    }

    /// Dirichlet-smoothed query log-likelihood of `doc_id`. Terms unseen in
    /// the whole collection floor at 1e-12 and set the flag.
    pub fn score(&self, query_terms: &[String], doc_id: &str) -> Result<(f64, bool)> {
        let counts = self
            .doc_counts
            .get(doc_id)
            .ok_or_else(|| Error::Contract(format!("unknown document {doc_id}")))?;
        let len = self.doc_lens[doc_id] as f64;
        let mut score = 0.0;
        let mut floored = false;
        for term in query_terms {
            let tf = counts.get(term).copied().unwrap_or(0) as f64;
            let mut p = (tf + self.mu * self.background(term)) / (len + self.mu);
            if p < PROB_FLOOR {
                p = PROB_FLOOR;
                floored = true;
            }
            score += p.ln();
        }
        Ok((score, floored))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lm(mu: f64) -> CollectionLM {
        let mut c = Collection::default();
        // P(a|C) = 0.5 by construction: "a" twice out of four tokens.
        c.insert("d1".into(), "a a b".into()).unwrap();
        c.insert("d2".into(), "c".into()).unwrap();
        CollectionLM::build(&c, mu).unwrap()
    }

    #[test]
    fn hand_computed_dirichlet_score() {
        let lm = lm(2.0);
        assert_eq!(lm.background("a"), 0.5);
        let (score, floored) = lm.score(&["a".to_string()], "d1").unwrap();
        // (tf 2 + 2·0.5) / (3 + 2) = 0.6
        assert!((score - 0.6f64.ln()).abs() < 1e-12);
        assert!(!floored);
    }

    #[test]
    fn absent_term_uses_pure_background() {
        let lm = lm(2.0);
        // tf = 0, P(c|C) = 0.25, |d1| = 3: (0 + 2·0.25) / 5 = 0.1
        let (score, floored) = lm.score(&["c".to_string()], "d1").unwrap();
        assert!((score - 0.1f64.ln()).abs() < 1e-12);
        assert!(!floored);
    }

    #[test]
    fn huge_mu_approaches_background() {
        let lm = lm(1e9);
        let (score, _) = lm.score(&["a".to_string()], "d2").unwrap();
        assert!((score - 0.5f64.ln()).abs() < 1e-6);
    }

    #[test]
    fn unknown_term_floors_with_flag() {
        let lm = lm(2.0);
        let (score, floored) = lm.score(&["zzz".to_string()], "d1").unwrap();
        assert!(floored);
        assert!((score - PROB_FLOOR.ln()).abs() < 1e-9);
    }

    #[test]
    fn score_ignores_document_token_order() {
        let mut c1 = Collection::default();
        c1.insert("d".into(), "x y x z".into()).unwrap();
        let mut c2 = Collection::default();
        c2.insert("d".into(), "z x y x".into()).unwrap();
        let a = CollectionLM::build(&c1, 10.0).unwrap();
        let b = CollectionLM::build(&c2, 10.0).unwrap();
        let q: Vec<String> = vec!["x".into(), "z".into()];
        assert_eq!(a.score(&q, "d").unwrap(), b.score(&q, "d").unwrap());
    }

    #[test]
    fn background_sums_to_one() {
        let lm = lm(5.0);
        assert!((lm.background_mass() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn mu_must_be_positive() {
        let c = Collection::default();
        assert!(CollectionLM::build(&c, 0.0).is_err());
    }
}
