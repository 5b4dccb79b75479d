//! MS-MARCO-style file ingestion: TSV collections/queries/triples, TREC
//! qrels, and TREC 6-column run files. Ids stay strings throughout.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// An id→text table preserving file order (used for both passages and
/// queries).
#[derive(Clone, Debug, Default)]
pub struct Collection {
    entries: Vec<(String, String)>,
    index: HashMap<String, usize>,
}

impl Collection {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn text(&self, id: &str) -> Option<&str> {
        self.index.get(id).map(|&i| self.entries[i].1.as_str())
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(id, t)| (id.as_str(), t.as_str()))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(id, _)| id.as_str())
    }

    pub fn insert(&mut self, id: String, text: String) -> Result<()> {
        if self.index.contains_key(&id) {
            return Err(Error::Contract(format!("duplicate id {id}")));
        }
        self.index.insert(id.clone(), self.entries.len());
        self.entries.push((id, text));
        Ok(())
    }
}

/// One line of a triples file: ids into the query and document tables.
#[derive(Clone, Debug)]
pub struct RawTriple {
    pub query_id: String,
    pub doc_pos_id: String,
    pub doc_neg_id: String,
}

/// First-stage candidates: per query, an ordered (doc, score) list with
/// non-increasing scores and unique doc ids.
#[derive(Clone, Debug, Default)]
pub struct CandidateRun {
    order: Vec<String>,
    lists: HashMap<String, Vec<RunEntry>>,
}

#[derive(Clone, Debug)]
pub struct RunEntry {
    pub doc_id: String,
    pub score: f64,
}

impl CandidateRun {
    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.order.iter().map(|s| s.as_str())
    }

    pub fn candidates(&self, query_id: &str) -> Option<&[RunEntry]> {
        self.lists.get(query_id).map(|v| v.as_slice())
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn push(&mut self, query_id: &str, entry: RunEntry) -> Result<()> {
        let list = match self.lists.get_mut(query_id) {
            Some(list) => list,
            None => {
                self.order.push(query_id.to_string());
                self.lists.entry(query_id.to_string()).or_default()
            }
        };
        if list.iter().any(|e| e.doc_id == entry.doc_id) {
            return Err(Error::Contract(format!(
                "duplicate document {} for query {query_id}",
                entry.doc_id
            )));
        }
        if let Some(last) = list.last() {
            if entry.score > last.score {
                return Err(Error::Contract(format!(
                    "scores for query {query_id} increase at document {}",
                    entry.doc_id
                )));
            }
        }
        list.push(entry);
        Ok(())
    }
}

/// (query id, doc id) → relevance grade ≥ 0.
#[derive(Clone, Debug, Default)]
pub struct Qrels {
    grades: HashMap<String, HashMap<String, u32>>,
}

impl Qrels {
    pub fn grade(&self, query_id: &str, doc_id: &str) -> Option<u32> {
        self.grades.get(query_id).and_then(|m| m.get(doc_id)).copied()
    }

    pub fn has_query(&self, query_id: &str) -> bool {
        self.grades.contains_key(query_id)
    }

    /// All judged (doc, grade) pairs for one query.
    pub fn judged(&self, query_id: &str) -> Option<&HashMap<String, u32>> {
        self.grades.get(query_id)
    }

    /// Number of documents with grade ≥ 1 for this query.
    pub fn relevant_count(&self, query_id: &str) -> usize {
        self.grades
            .get(query_id)
            .map(|m| m.values().filter(|&&g| g >= 1).count())
            .unwrap_or(0)
    }

    pub fn insert(&mut self, query_id: String, doc_id: String, grade: u32) {
        self.grades.entry(query_id).or_default().insert(doc_id, grade);
    }

    pub fn query_count(&self) -> usize {
        self.grades.len()
    }
}

fn read_lines(path: &Path) -> Result<impl Iterator<Item = (usize, std::io::Result<String>)>> {
    let file = std::fs::File::open(path).map_err(|e| {
        Error::Config(format!("cannot open {}: {e}", path.display()))
    })?;
    Ok(BufReader::new(file)
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l)))
}

fn path_name(path: &Path) -> String {
    path.display().to_string()
}

/// TSV `doc_id \t text`.
pub fn load_collection(path: &Path) -> Result<Collection> {
    let name = path_name(path);
    let mut out = Collection::default();
    for (lineno, line) in read_lines(path)? {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let (id, text) = line
            .split_once('\t')
            .ok_or_else(|| Error::data(&name, lineno, "expected `id<TAB>text`"))?;
        out.insert(id.to_string(), text.to_string())
            .map_err(|_| Error::data(&name, lineno, format!("duplicate doc id {id}")))?;
    }
    Ok(out)
}

/// TSV `query_id \t text`; same shape as a collection.
pub fn load_queries(path: &Path) -> Result<Collection> {
    load_collection(path)
}

/// TSV `query_id \t pos_doc_id \t neg_doc_id`.
pub fn load_triples(path: &Path) -> Result<Vec<RawTriple>> {
    let name = path_name(path);
    let mut out = Vec::new();
    for (lineno, line) in read_lines(path)? {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        match (parts.next(), parts.next(), parts.next(), parts.next()) {
            (Some(q), Some(p), Some(n), None) => out.push(RawTriple {
                query_id: q.to_string(),
                doc_pos_id: p.to_string(),
                doc_neg_id: n.to_string(),
            }),
            _ => {
                return Err(Error::data(
                    &name,
                    lineno,
                    "expected `query_id<TAB>pos_doc<TAB>neg_doc`",
                ))
            }
        }
    }
    Ok(out)
}

/// TREC qrels: `query_id 0 doc_id grade`, whitespace-separated.
pub fn load_qrels(path: &Path) -> Result<Qrels> {
    let name = path_name(path);
    let mut out = Qrels::default();
    for (lineno, line) in read_lines(path)? {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(Error::data(
                &name,
                lineno,
                "expected `query_id 0 doc_id grade`",
            ));
        }
        let grade: u32 = fields[3]
            .parse()
            .map_err(|_| Error::data(&name, lineno, format!("bad grade {:?}", fields[3])))?;
        out.insert(fields[0].to_string(), fields[2].to_string(), grade);
    }
    Ok(out)
}

/// TREC 6-column run: `query_id Q0 doc_id rank score tag`.
pub fn load_run(path: &Path) -> Result<CandidateRun> {
    let name = path_name(path);
    let mut out = CandidateRun::default();
    for (lineno, line) in read_lines(path)? {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(Error::data(
                &name,
                lineno,
                "expected `query_id Q0 doc_id rank score tag`",
            ));
        }
        let score: f64 = fields[4]
            .parse()
            .map_err(|_| Error::data(&name, lineno, format!("bad score {:?}", fields[4])))?;
        out.push(
            fields[0],
            RunEntry {
                doc_id: fields[2].to_string(),
                score,
            },
        )
        .map_err(|e| Error::data(&name, lineno, e.to_string()))?;
    }
    Ok(out)
}

/// Write a TREC 6-column run atomically.
pub fn write_run(
    path: &Path,
    lists: &[(String, Vec<RunEntry>)],
    tag: &str,
) -> Result<()> {
    let mut out = Vec::new();
    for (query_id, entries) in lists {
        for (rank, e) in entries.iter().enumerate() {
            writeln!(
                out,
                "{query_id} Q0 {} {} {:.6} {tag}",
                e.doc_id,
                rank + 1,
                e.score
            )?;
        }
    }
    crate::cli::write_atomic(path, &out)
}
