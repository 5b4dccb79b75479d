//! Term↔id maps with fixed specials and per-document OOV extension.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const SOS: u32 = 2;
pub const EOS: u32 = 3;

const SPECIALS: [&str; 4] = ["<pad>", "<unk>", "<sos>", "<eos>"];
const VOCAB_MAGIC: &str = "genrank-vocab v1";

/// Base vocabulary. Ids 0–3 are the specials; the rest are corpus terms in
/// deterministic order (frequency descending, then lexicographic).
#[derive(Clone, Debug)]
pub struct Vocabulary {
    term_to_id: HashMap<String, u32>,
    id_to_term: Vec<String>,
    min_frequency: u32,
}

impl Vocabulary {
    /// Build from token streams, keeping terms with frequency ≥
    /// `min_frequency`. An empty corpus yields the specials only.
    pub fn build<'a, I>(corpus: I, min_frequency: u32) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [String]>,
    {
        if min_frequency < 1 {
            return Err(Error::Contract(
                "min_frequency must be at least 1".into(),
            ));
        }
        let mut freq: HashMap<&str, u32> = HashMap::new();
        for tokens in corpus {
            for tok in tokens {
                *freq.entry(tok.as_str()).or_insert(0) += 1;
            }
        }
        let mut kept: Vec<(&str, u32)> = freq
            .into_iter()
            .filter(|&(_, n)| n >= min_frequency)
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

        let mut id_to_term: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        id_to_term.extend(kept.iter().map(|(t, _)| t.to_string()));
        let term_to_id = id_to_term
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Ok(Vocabulary {
            term_to_id,
            id_to_term,
            min_frequency,
        })
    }

    /// Total size including specials.
    pub fn len(&self) -> usize {
        self.id_to_term.len()
    }

    pub fn is_empty(&self) -> bool {
        false // specials are always present
    }

    pub fn min_frequency(&self) -> u32 {
        self.min_frequency
    }

    pub fn id(&self, term: &str) -> Option<u32> {
        self.term_to_id.get(term).copied()
    }

    pub fn id_or_unk(&self, term: &str) -> u32 {
        self.id(term).unwrap_or(UNK)
    }

    pub fn term(&self, id: u32) -> Option<&str> {
        self.id_to_term.get(id as usize).map(|s| s.as_str())
    }

    pub fn contains(&self, term: &str) -> bool {
        self.term_to_id.contains_key(term)
    }

    /// Base ids of a query, terminated with `EOS`.
    pub fn encode_query(&self, tokens: &[String]) -> Vec<u32> {
        let mut ids: Vec<u32> = tokens.iter().map(|t| self.id_or_unk(t)).collect();
        ids.push(EOS);
        ids
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        writeln!(out, "{VOCAB_MAGIC}")?;
        writeln!(out, "min_frequency\t{}", self.min_frequency)?;
        for term in &self.id_to_term[SPECIALS.len()..] {
            writeln!(out, "{term}")?;
        }
        crate::cli::write_atomic(path, &out)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let name = path.display().to_string();
        let mut lines = BufReader::new(file).lines().enumerate();
        let (_, magic) = lines
            .next()
            .ok_or_else(|| Error::data(&name, 1, "empty vocabulary file"))?;
        if magic? != VOCAB_MAGIC {
            return Err(Error::data(&name, 1, "not a genrank vocabulary file"));
        }
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::data(&name, 2, "missing min_frequency header"))?;
        let header = header?;
        let min_frequency = header
            .strip_prefix("min_frequency\t")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::data(&name, 2, "malformed min_frequency header"))?;

        let mut id_to_term: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        for (i, line) in lines {
            let term = line?;
            if term.is_empty() {
                return Err(Error::data(&name, i + 1, "empty vocabulary term"));
            }
            id_to_term.push(term);
        }
        let term_to_id = id_to_term
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Ok(Vocabulary {
            term_to_id,
            id_to_term,
            min_frequency,
        })
    }
}

/// Per-document vocabulary extension: each distinct OOV term gets a fresh id
/// starting at the base size, in first-occurrence order.
#[derive(Clone, Debug, Default)]
pub struct ExtendedVocabulary {
    base_len: usize,
    oov_terms: Vec<String>,
    oov_ids: HashMap<String, u32>,
}

impl ExtendedVocabulary {
    pub fn base_len(&self) -> usize {
        self.base_len
    }

    /// Base size plus this document's OOV count.
    pub fn len(&self) -> usize {
        self.base_len + self.oov_terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn oov_count(&self) -> usize {
        self.oov_terms.len()
    }

    /// Extended id of an OOV term present in this document.
    pub fn oov_id(&self, term: &str) -> Option<u32> {
        self.oov_ids.get(term).copied()
    }

    /// Surface form for any extended id, falling back to the base vocabulary.
    pub fn term<'a>(&'a self, vocab: &'a Vocabulary, id: u32) -> Option<&'a str> {
        if (id as usize) < self.base_len {
            vocab.term(id)
        } else {
            self.oov_terms
                .get(id as usize - self.base_len)
                .map(|s| s.as_str())
        }
    }
}

/// Encode document tokens against `vocab`. Returns `(base_ids,
/// extended_ids, extension)`: base ids map OOVs to `UNK`, extended ids give
/// each distinct OOV a fresh contiguous id from `vocab.len()` on.
pub fn encode_with_extension(
    tokens: &[String],
    vocab: &Vocabulary,
) -> (Vec<u32>, Vec<u32>, ExtendedVocabulary) {
    let mut ext = ExtendedVocabulary {
        base_len: vocab.len(),
        oov_terms: Vec::new(),
        oov_ids: HashMap::new(),
    };
    let mut base_ids = Vec::with_capacity(tokens.len());
    let mut extended_ids = Vec::with_capacity(tokens.len());
    for tok in tokens {
        match vocab.id(tok) {
            Some(id) => {
                base_ids.push(id);
                extended_ids.push(id);
            }
            None => {
                base_ids.push(UNK);
                let next = (ext.base_len + ext.oov_terms.len()) as u32;
                let id = *ext.oov_ids.entry(tok.clone()).or_insert_with(|| {
                    ext.oov_terms.push(tok.clone());
                    next
                });
                extended_ids.push(id);
            }
        }
    }
    (base_ids, extended_ids, ext)
}
