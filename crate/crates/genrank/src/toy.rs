//! Synthetic corpora so every experiment runs offline.
//!
//! Passages are templated around invented entity names ("zorak", "blius")
//! that stay below the vocabulary frequency threshold: they are OOV by
//! construction, reachable only through the copy mechanism. Each entity
//! gets four aspect passages (lifespan, diet, habitat, breeding) and four
//! matching queries. The aspect-indicator words a query must be inferred
//! from never appear in the query itself (no stemming, so "live" never
//! matches "lives"), which keeps term-matching baselines near chance among
//! an entity's passages while the association stays learnable; filler
//! sentences spread query-template words across all passages so BM25 can
//! fill candidate lists past the entity's own documents.
//!
//! Also provides planted-signal cut-off instances: the entropy channel dips
//! exactly at the oracle position, while the relevance channel carries a
//! score cliff that is misplaced in a fraction of lists.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cutoff::CutoffInstance;
use crate::error::{Error, Result};
use crate::score::Bm25Index;
use crate::text::{write_run, Collection, Qrels, RawTriple};

const PREFIXES: [&str; 30] = [
    "zor", "bli", "gru", "fen", "mak", "tiv", "rul", "sap", "qua", "nix", "vel", "dro", "hul",
    "jib", "kol", "mev", "paz", "rek", "syl", "tog", "ubb", "vix", "wem", "yat", "zem", "ard",
    "bun", "cro", "dag", "eph",
];
const SUFFIXES: [&str; 10] = ["ak", "el", "im", "or", "us", "an", "eth", "ib", "ol", "ur"];

const FOODS: [&str; 10] = [
    "seeds", "leaves", "worms", "berries", "roots", "insects", "fruit", "grass", "bark", "moss",
];
const PLACES: [&str; 10] = [
    "forest", "river", "desert", "mountain", "valley", "swamp", "meadow", "cave", "shore",
    "tundra",
];
const SEASONS: [&str; 4] = ["spring", "summer", "autumn", "winter"];
const NUMBERS: [&str; 10] = ["20", "35", "50", "80", "100", "150", "200", "250", "300", "365"];
// Fillers deliberately reuse query-template words (but never the entity or
// aspect-indicator words), so first-stage retrieval finds weak matches
// beyond the entity's own passages. Which filler a passage gets is random
// and carries no relevance signal.
const FILLERS: [&str; 4] = [
    "many people ask how long it can live",
    "what it may eat or do is a common question",
    "people wonder where it can live and breed",
    "guides note when it will breed or rest",
];

pub const ASPECTS: [&str; 4] = ["lifespan", "diet", "habitat", "breeding"];

fn entity_name(i: usize) -> String {
    format!("{}{}", PREFIXES[i % PREFIXES.len()], SUFFIXES[i / PREFIXES.len()])
}

fn aspect_query(aspect: usize, entity: &str) -> String {
    match aspect {
        0 => format!("how long do {entity} live"),
        1 => format!("what do {entity} eat"),
        2 => format!("where do {entity} live"),
        _ => format!("when do {entity} breed"),
    }
}

fn aspect_passage(aspect: usize, entity: &str, rng: &mut ChaCha8Rng) -> String {
    let body = match aspect {
        0 => format!(
            "the {entity} lives for about {} days and then rests quietly",
            NUMBERS[rng.gen_range(0..NUMBERS.len())]
        ),
        1 => format!(
            "a hungry {entity} eats {} and {} every single day at dawn",
            FOODS[rng.gen_range(0..FOODS.len())],
            FOODS[rng.gen_range(0..FOODS.len())]
        ),
        2 => format!(
            "the {entity} lives in the {} near the {} all year round",
            PLACES[rng.gen_range(0..PLACES.len())],
            PLACES[rng.gen_range(0..PLACES.len())]
        ),
        _ => format!(
            "the {entity} lays {} eggs in early {} and guards the nest",
            NUMBERS[rng.gen_range(0..NUMBERS.len())],
            SEASONS[rng.gen_range(0..SEASONS.len())]
        ),
    };
    format!("{body} . {}", FILLERS[rng.gen_range(0..FILLERS.len())])
}

#[derive(Clone, Debug)]
pub struct ToySpec {
    pub n_train_entities: usize,
    pub n_eval_entities: usize,
    /// BM25 candidate depth for the first-stage run over eval queries.
    pub candidates_k: usize,
    pub seed: u64,
}

impl ToySpec {
    pub fn new(n_train_entities: usize, n_eval_entities: usize, seed: u64) -> Self {
        ToySpec {
            n_train_entities,
            n_eval_entities,
            candidates_k: 20,
            seed,
        }
    }

    /// Vocabulary threshold that keeps entity names out: a train entity
    /// occurs 4 times in passages plus 4 times in its queries.
    pub fn recommended_min_frequency(&self) -> u32 {
        9
    }
}

#[derive(Debug)]
pub struct ToyCorpus {
    pub collection: Collection,
    pub train_queries: Collection,
    pub eval_queries: Collection,
    pub triples: Vec<RawTriple>,
    pub qrels: Qrels,
}

fn passage_id(entity: usize, aspect: usize) -> String {
    format!("p{entity:04}_{}", ASPECTS[aspect])
}

fn query_id(entity: usize, aspect: usize) -> String {
    format!("q{entity:04}_{}", ASPECTS[aspect])
}

/// Generate the corpus in memory. Deterministic per spec.
pub fn generate(spec: &ToySpec) -> Result<ToyCorpus> {
    let total = spec.n_train_entities + spec.n_eval_entities;
    if total == 0 || total > PREFIXES.len() * SUFFIXES.len() {
        return Err(Error::Contract(format!(
            "entity count {total} outside 1..={}",
            PREFIXES.len() * SUFFIXES.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut collection = Collection::default();
    let mut train_queries = Collection::default();
    let mut eval_queries = Collection::default();
    let mut qrels = Qrels::default();
    let mut triples = Vec::new();

    for e in 0..total {
        let entity = entity_name(e);
        let is_train = e < spec.n_train_entities;
        for aspect in 0..ASPECTS.len() {
            collection.insert(passage_id(e, aspect), aspect_passage(aspect, &entity, &mut rng))?;
            let qid = query_id(e, aspect);
            if is_train {
                train_queries.insert(qid.clone(), aspect_query(aspect, &entity))?;
            } else {
                eval_queries.insert(qid.clone(), aspect_query(aspect, &entity))?;
            }
            for other in 0..ASPECTS.len() {
                qrels.insert(
                    qid.clone(),
                    passage_id(e, other),
                    u32::from(other == aspect),
                );
            }
        }
    }

    // Two negatives per training query: the same entity's next aspect (a
    // hard negative) and a random other entity's passage.
    for e in 0..spec.n_train_entities {
        for aspect in 0..ASPECTS.len() {
            let qid = query_id(e, aspect);
            let pos = passage_id(e, aspect);
            let hard = passage_id(e, (aspect + 1 + rng.gen_range(0..3)) % 4);
            triples.push(RawTriple {
                query_id: qid.clone(),
                doc_pos_id: pos.clone(),
                doc_neg_id: hard,
            });
            let mut other = rng.gen_range(0..total);
            if other == e {
                other = (other + 1) % total;
            }
            triples.push(RawTriple {
                query_id: qid,
                doc_pos_id: pos,
                doc_neg_id: passage_id(other, rng.gen_range(0..ASPECTS.len())),
            });
        }
    }

    Ok(ToyCorpus {
        collection,
        train_queries,
        eval_queries,
        triples,
        qrels,
    })
}

#[derive(Clone, Debug)]
pub struct ToyFiles {
    pub collection: PathBuf,
    pub train_queries: PathBuf,
    pub eval_queries: PathBuf,
    pub triples: PathBuf,
    pub qrels: PathBuf,
    pub bm25_run: PathBuf,
}

/// Generate and write the corpus plus a BM25 first-stage run over the eval
/// queries.
pub fn generate_files(spec: &ToySpec, dir: &Path) -> Result<ToyFiles> {
    let corpus = generate(spec)?;
    std::fs::create_dir_all(dir)?;
    let files = ToyFiles {
        collection: dir.join("collection.tsv"),
        train_queries: dir.join("queries_train.tsv"),
        eval_queries: dir.join("queries_eval.tsv"),
        triples: dir.join("triples.tsv"),
        qrels: dir.join("qrels.txt"),
        bm25_run: dir.join("bm25.run"),
    };

    let tsv = |c: &Collection| {
        let mut out = String::new();
        for (id, text) in c.iter() {
            out.push_str(id);
            out.push('\t');
            out.push_str(text);
            out.push('\n');
        }
        out
    };
    crate::cli::write_atomic(&files.collection, tsv(&corpus.collection).as_bytes())?;
    crate::cli::write_atomic(&files.train_queries, tsv(&corpus.train_queries).as_bytes())?;
    crate::cli::write_atomic(&files.eval_queries, tsv(&corpus.eval_queries).as_bytes())?;

    let mut triples = String::new();
    for t in &corpus.triples {
        triples.push_str(&format!(
            "{}\t{}\t{}\n",
            t.query_id, t.doc_pos_id, t.doc_neg_id
        ));
    }
    crate::cli::write_atomic(&files.triples, triples.as_bytes())?;

    let mut qrels_text = String::new();
    let mut qids: Vec<&str> = corpus
        .train_queries
        .ids()
        .chain(corpus.eval_queries.ids())
        .collect();
    qids.sort_unstable();
    for qid in qids {
        let judged = corpus.qrels.judged(qid).expect("every query is judged");
        let mut docs: Vec<&String> = judged.keys().collect();
        docs.sort_unstable();
        for doc in docs {
            qrels_text.push_str(&format!("{qid} 0 {doc} {}\n", judged[doc]));
        }
    }
    crate::cli::write_atomic(&files.qrels, qrels_text.as_bytes())?;

    let index = Bm25Index::build(&corpus.collection);
    let mut lists = Vec::new();
    for (qid, text) in corpus.eval_queries.iter() {
        let hits = index.topk(text, spec.candidates_k);
        if !hits.is_empty() {
            lists.push((qid.to_string(), hits));
        }
    }
    write_run(&files.bm25_run, &lists, "bm25")?;
    Ok(files)
}

// ── Planted-signal cut-off data ─────────────────────────────────────────

#[derive(Clone, Debug)]
pub struct SyntheticCutoffSpec {
    pub n_lists: usize,
    pub list_len: usize,
    /// Fraction of lists whose relevance cliff is misplaced; the entropy
    /// dip is always faithful.
    pub rel_noise_fraction: f64,
    pub seed: u64,
}

impl SyntheticCutoffSpec {
    pub fn new(n_lists: usize, seed: u64) -> Self {
        SyntheticCutoffSpec {
            n_lists,
            list_len: 20,
            rel_noise_fraction: 0.25,
            seed,
        }
    }
}

/// Ranked lists where the oracle cutoff is recoverable exactly from the
/// uncertainty entropy channel and only partially from relevance scores.
pub fn synthetic_cutoff_instances(spec: &SyntheticCutoffSpec) -> Result<Vec<CutoffInstance>> {
    if spec.list_len < 16 {
        return Err(Error::Contract("synthetic cutoff lists need length ≥ 16".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Vec::with_capacity(spec.n_lists);
    for q in 0..spec.n_lists {
        let n = spec.list_len;
        let k_star = rng.gen_range(2..=14usize);
        let labels: Vec<bool> = (0..n).map(|i| i < k_star).collect();

        let cliff_at = if rng.gen::<f64>() < spec.rel_noise_fraction {
            rng.gen_range(1..n - 1)
        } else {
            k_star
        };
        // Strictly decreasing scores built from positive gaps, with one
        // large gap after the cliff position.
        let mut rel = Vec::with_capacity(n);
        let mut score = 10.0;
        for i in 0..n {
            rel.push(score);
            let mut gap = 0.05 + 0.04 * rng.gen::<f64>();
            if i + 1 == cliff_at {
                gap += 1.0;
            }
            score -= gap;
        }

        let features: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let entropy = if i + 1 == k_star {
                    0.3 + 0.02 * rng.gen::<f64>()
                } else {
                    1.5 + 0.05 * rng.gen::<f64>()
                };
                vec![
                    rel[i],
                    0.8 + 0.05 * rng.gen::<f64>(),
                    0.2 + 0.05 * rng.gen::<f64>(),
                    1.1 + 0.05 * rng.gen::<f64>(),
                    entropy,
                ]
            })
            .collect();
        out.push(CutoffInstance::new(format!("s{q:04}"), features, labels)?);
    }
    Ok(out)
}
