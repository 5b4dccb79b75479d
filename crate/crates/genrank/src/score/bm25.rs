//! Okapi BM25 over an inverted index, for first-stage candidate generation.

use std::collections::HashMap;

use crate::text::{tokenize, Collection, RunEntry};

pub const BM25_K1: f64 = 1.2;
pub const BM25_B: f64 = 0.75;

#[derive(Clone, Debug)]
pub struct Bm25Index {
    /// term → (doc ordinal, tf) postings, in collection order.
    postings: HashMap<String, Vec<(usize, usize)>>,
    doc_ids: Vec<String>,
    doc_lens: Vec<usize>,
    avgdl: f64,
}

impl Bm25Index {
    pub fn build(collection: &Collection) -> Self {
        let mut postings: HashMap<String, Vec<(usize, usize)>> = HashMap::new();
        let mut doc_ids = Vec::with_capacity(collection.len());
        let mut doc_lens = Vec::with_capacity(collection.len());
        for (ord, (doc_id, text)) in collection.iter().enumerate() {
            let tokens = tokenize(text);
            let mut counts: HashMap<&str, usize> = HashMap::new();
            for t in &tokens {
                *counts.entry(t.as_str()).or_insert(0) += 1;
            }
            for (term, tf) in counts {
                postings.entry(term.to_string()).or_default().push((ord, tf));
            }
            doc_ids.push(doc_id.to_string());
            doc_lens.push(tokens.len());
        }
        let avgdl = if doc_lens.is_empty() {
            0.0
        } else {
            doc_lens.iter().sum::<usize>() as f64 / doc_lens.len() as f64
        };
        Bm25Index {
            postings,
            doc_ids,
            doc_lens,
            avgdl,
        }
    }

    pub fn doc_count(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn idf(&self, term: &str) -> f64 {
        let df = self.postings.get(term).map(|p| p.len()).unwrap_or(0) as f64;
        let n = self.doc_count() as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// Top-k documents by BM25, scores non-increasing, ties broken by doc
    /// id ascending. Only documents containing at least one query term are
    /// scored; an unmatched query yields an empty list.
    pub fn topk(&self, query_text: &str, k: usize) -> Vec<RunEntry> {
        let terms = tokenize(query_text);
        if terms.is_empty() {
            eprintln!("warning: query {query_text:?} tokenizes to nothing, no candidates");
            return Vec::new();
        }
        let mut scores: HashMap<usize, f64> = HashMap::new();
        for term in &terms {
            let Some(postings) = self.postings.get(term) else {
                continue;
            };
            let idf = self.idf(term);
            for &(ord, tf) in postings {
                let tf = tf as f64;
                let dl = self.doc_lens[ord] as f64;
                let denom = tf + BM25_K1 * (1.0 - BM25_B + BM25_B * dl / self.avgdl);
                *scores.entry(ord).or_insert(0.0) += idf * tf * (BM25_K1 + 1.0) / denom;
            }
        }
        let mut scored: Vec<(usize, f64)> = scores.into_iter().collect();
        scored.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| self.doc_ids[a.0].cmp(&self.doc_ids[b.0]))
        });
        scored
            .into_iter()
            .take(k)
            .map(|(ord, score)| RunEntry {
                doc_id: self.doc_ids[ord].clone(),
                score,
            })
            .collect()
    }
}
