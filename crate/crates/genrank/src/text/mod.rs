//! Tokenization, vocabulary with per-document OOV extension, and ingestion
//! of collection / query / triple / qrels / run files.

mod files;
mod vocab;

pub use files::{
    load_collection, load_qrels, load_queries, load_run, load_triples, write_run, CandidateRun,
    Collection, Qrels, RawTriple, RunEntry,
};
pub use vocab::{encode_with_extension, ExtendedVocabulary, Vocabulary, EOS, PAD, SOS, UNK};

/// Lowercase, split on whitespace, strip leading/trailing ASCII punctuation
/// from each token, drop empties.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .filter_map(|raw| {
            let trimmed = raw.trim_matches(|c: char| c.is_ascii_punctuation());
            if trimmed.is_empty() {
                None
            } else {
                Some(trimmed.to_lowercase())
            }
        })
        .collect()
}

/// Document and query length caps, in tokens. Queries reserve one slot for
/// `<EOS>`.
pub const MAX_DOC_TOKENS: usize = 200;
pub const MAX_QUERY_TOKENS: usize = 30;

/// A training triple after tokenization and encoding. Surface tokens are
/// kept alongside ids: the copy mechanism matches query OOV terms to
/// document OOV terms by surface form.
#[derive(Clone, Debug)]
pub struct TrainingTriple {
    pub query_id: String,
    /// Query surface tokens, truncated, without the terminator.
    pub query_tokens: Vec<String>,
    /// Base-vocabulary ids of the query, ending with `EOS`.
    pub query_ids: Vec<u32>,
    pub doc_pos_id: String,
    pub doc_pos_tokens: Vec<String>,
    pub doc_neg_id: String,
    pub doc_neg_tokens: Vec<String>,
}

/// Join raw id triples against their collections and encode them.
pub fn encode_triples(
    raw: &[RawTriple],
    collection: &Collection,
    queries: &Collection,
    vocab: &Vocabulary,
) -> crate::Result<Vec<TrainingTriple>> {
    raw.iter()
        .map(|t| {
            let query_text = queries.text(&t.query_id).ok_or_else(|| {
                crate::Error::Contract(format!("triple names unknown query {}", t.query_id))
            })?;
            let doc_pos = collection.text(&t.doc_pos_id).ok_or_else(|| {
                crate::Error::Contract(format!("triple names unknown document {}", t.doc_pos_id))
            })?;
            let doc_neg = collection.text(&t.doc_neg_id).ok_or_else(|| {
                crate::Error::Contract(format!("triple names unknown document {}", t.doc_neg_id))
            })?;
            let query_tokens = truncate_query(tokenize(query_text));
            if query_tokens.is_empty() {
                return Err(crate::Error::EmptySequence(format!(
                    "query {} tokenizes to nothing",
                    t.query_id
                )));
            }
            let doc_pos_tokens = truncate_doc(tokenize(doc_pos));
            let doc_neg_tokens = truncate_doc(tokenize(doc_neg));
            for (id, tokens) in [(&t.doc_pos_id, &doc_pos_tokens), (&t.doc_neg_id, &doc_neg_tokens)] {
                if tokens.is_empty() {
                    return Err(crate::Error::EmptySequence(format!(
                        "document {id} tokenizes to nothing"
                    )));
                }
            }
            let query_ids = vocab.encode_query(&query_tokens);
            Ok(TrainingTriple {
                query_id: t.query_id.clone(),
                query_tokens,
                query_ids,
                doc_pos_id: t.doc_pos_id.clone(),
                doc_pos_tokens,
                doc_neg_id: t.doc_neg_id.clone(),
                doc_neg_tokens,
            })
        })
        .collect()
}

pub fn truncate_doc(mut tokens: Vec<String>) -> Vec<String> {
    tokens.truncate(MAX_DOC_TOKENS);
    tokens
}

/// Queries keep one slot for the `<EOS>` terminator.
pub fn truncate_query(mut tokens: Vec<String>) -> Vec<String> {
    tokens.truncate(MAX_QUERY_TOKENS - 1);
    tokens
}
