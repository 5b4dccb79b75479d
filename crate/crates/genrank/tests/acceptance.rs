//! Acceptance suite: one test per shipping criterion, each printing a
//! `acceptance NN <name>: PASS` line (run with `-- --nocapture` to see
//! them). The brute-force metric oracles live here, independent of the
//! library's implementations.

use std::collections::BTreeMap;
use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use genrank::autodiff::{
    attention, concat, concat_cols, gradcheck, lstm_cell, stack_rows, Tape, Tensor, Var,
};
use genrank::cutoff::{evaluate, oracle_cutoff, f1_at, EvalOptions, Method};
use genrank::metrics::{self, paired_t_test};
use genrank::model::{Architecture, GenerativeModel, ModelConfig};
use genrank::score::{rerank, Bm25Index, CollectionLM, RankedEntry, RankedList};
use genrank::text::{
    encode_triples, tokenize, truncate_query, Qrels, Vocabulary, SOS,
};
use genrank::toy::{self, ToySpec};
use genrank::train::{
    train, triple_loss_and_grads, triple_loss_value, LossKind, TrainOptions,
};
use genrank::uncertainty::{
    nucleus, position_stats, query_aggregates, spearman_test, term_uncertainty,
};

const FD_H: f64 = 1e-5;
const FD_TOL: f64 = 1e-4;

fn words(ws: &[&str]) -> Vec<String> {
    ws.iter().map(|w| w.to_string()).collect()
}

fn build_vocab(corpus: &toy::ToyCorpus, min_freq: u32) -> Vocabulary {
    let mut streams: Vec<Vec<String>> = corpus.collection.iter().map(|(_, t)| tokenize(t)).collect();
    streams.extend(corpus.train_queries.iter().map(|(_, t)| tokenize(t)));
    let refs: Vec<&[String]> = streams.iter().map(|s| s.as_slice()).collect();
    Vocabulary::build(refs.iter().copied(), min_freq).unwrap()
}

// ── Criterion 1: gradient suite ─────────────────────────────────────────

/// Rebuild-and-compare harness: analytic gradients from one tape pass vs
/// central differences of a value-only rebuild.
fn check_composite<F>(build: F, inputs: &[Tensor])
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Var<'t>,
{
    let tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.input(t)).collect();
    let loss = build(&tape, &vars);
    tape.backward(loss).unwrap();
    let analytic: Vec<Tensor> = vars.iter().map(|v| v.grad()).collect();
    let forward = |xs: &[Tensor]| {
        let t = Tape::inference();
        let vs: Vec<Var> = xs.iter().map(|x| t.input(x)).collect();
        build(&t, &vs).scalar_value()
    };
    let fd = gradcheck::finite_difference(forward, inputs, FD_H);
    for (a, b) in analytic.iter().zip(&fd) {
        for (&x, &y) in a.data().iter().zip(b.data()) {
            assert!(
                gradcheck::relative_error(x, y) < FD_TOL,
                "analytic {x} vs finite difference {y}"
            );
        }
    }
}

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

#[test]
fn acceptance_01_gradient_suite() {
    let started = Instant::now();

    // Every tensor op, 20 seeds each, via composite graphs.
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        // Linear algebra. movement, softmax, and selection ops.
        let m1 = rand_tensor(&mut rng, &[3, 4]);
        let m2 = rand_tensor(&mut rng, &[4, 2]);
        let v6 = rand_tensor(&mut rng, &[6]);
        let probe = rand_tensor(&mut rng, &[3, 4]);
        check_composite(
            |_, vs| {
                let prod = vs[0].matmul(vs[1]).unwrap().tanh().sum();
                let soft = vs[2].softmax().unwrap().select(2).unwrap().ln();
                let mask = vec![
                    true, true, false, true, //
                    false, true, true, true, //
                    true, true, true, false,
                ];
                let rows = vs[0]
                    .softmax_rows(Some(&mask))
                    .unwrap()
                    .mul(vs[3])
                    .unwrap()
                    .sum();
                let moved = vs[0]
                    .transpose()
                    .slice_cols(0, 2)
                    .unwrap()
                    .reshape(vec![8])
                    .unwrap()
                    .slice(1, 7)
                    .unwrap()
                    .mean();
                prod.add(soft).unwrap().add(rows).unwrap().add(moved).unwrap()
            },
            &[m1, m2, v6, probe],
        );

        // Gather / scatter / pad / concat / stack / elementwise / scalar ops.
        let tbl = rand_tensor(&mut rng, &[5, 3]);
        let v4 = rand_tensor(&mut rng, &[4]);
        let v8 = rand_tensor(&mut rng, &[8]);
        let s1 = rand_tensor(&mut rng, &[1]);
        check_composite(
            |_, vs| {
                let rows = vs[0].gather_rows(&[4, 0, 2, 0]).unwrap();
                let pooled = rows.matmul(vs[0].transpose()).unwrap().sigmoid().sum();
                let scat = vs[1]
                    .scatter_add(&[3, 0, 3, 6], 7)
                    .unwrap()
                    .pad_zeros(8)
                    .unwrap()
                    .mul(vs[2])
                    .unwrap()
                    .sum();
                let joined = concat(&[vs[1].relu(), vs[1].exp()]).unwrap();
                let stacked = stack_rows(&[vs[1], vs[1].scale(0.5).add_const(0.1)]).unwrap();
                let wide = concat_cols(&[stacked, stacked]).unwrap().row(1).unwrap().sum();
                let scaled = joined.scale_by(vs[3]).unwrap().sum();
                let gate = vs[3].rsub_const(1.0).sum();
                pooled
                    .add(scat)
                    .unwrap()
                    .add(wide)
                    .unwrap()
                    .add(scaled)
                    .unwrap()
                    .add(gate)
                    .unwrap()
            },
            &[tbl, v4, v8, s1],
        );

        // Recurrent cell, attention, layer norm, and the stable log(1-e^x).
        let x = rand_tensor(&mut rng, &[3]);
        let h = rand_tensor(&mut rng, &[4]);
        let c = rand_tensor(&mut rng, &[4]);
        let w = rand_tensor(&mut rng, &[16, 7]);
        let b = rand_tensor(&mut rng, &[16]);
        let q = rand_tensor(&mut rng, &[3]);
        let keys = rand_tensor(&mut rng, &[5, 4]);
        let values = rand_tensor(&mut rng, &[5, 4]);
        let gamma = rand_tensor(&mut rng, &[4]);
        let beta = rand_tensor(&mut rng, &[4]);
        let neg = Tensor::vector(vec![
            rng.gen_range(-2.0..-0.1),
            rng.gen_range(-40.0..-5.0),
        ]);
        check_composite(
            |_, vs| {
                let (h1, c1) = lstm_cell(vs[0], vs[1], vs[2], vs[3], vs[4]).unwrap();
                let (ctx, weights) = attention(h1, vs[6], vs[7]).unwrap();
                let normed = stack_rows(&[ctx, c1.tanh()])
                    .unwrap()
                    .layer_norm(vs[8], vs[9], 1e-5)
                    .unwrap()
                    .sum();
                let attn_probe = weights.mul(weights).unwrap().sum();
                let stable = vs[10].log1mexp().unwrap().sum();
                let q_probe = vs[5].sigmoid().sum();
                normed
                    .add(attn_probe)
                    .unwrap()
                    .add(stable)
                    .unwrap()
                    .add(q_probe)
                    .unwrap()
            },
            &[x, h, c, w, b, q, keys, values, gamma, beta, neg],
        );
    }

    // Every architecture × every loss: analytic parameter gradients vs
    // finite differences at sampled coordinates, 20 seeds each.
    let docs = [
        words(&["crystal", "rivers", "carry", "cold", "water", "north"]),
        words(&["amber", "beetles", "carry", "warm", "sand", "south"]),
    ];
    let streams: Vec<&[String]> = docs.iter().map(|d| d.as_slice()).collect();
    let vocab = Vocabulary::build(streams.iter().copied(), 1).unwrap();
    let losses = [
        LossKind::Nll,
        LossKind::Marg { margin: 5.0 },
        LossKind::Nl3u,
    ];
    for arch in Architecture::ALL {
        for kind in losses {
            for seed in 0..20u64 {
                let mut rng = ChaCha8Rng::seed_from_u64(0xACCE + seed);
                let model = GenerativeModel::new(ModelConfig {
                    architecture: arch,
                    embedding_dim: 8,
                    hidden_dim: 8,
                    n_transformer_layers: 1,
                    n_heads: 2,
                    feedforward_dim: 12,
                    vocab_size: vocab.len(),
                    dropout: 0.0,
                    seed,
                })
                .unwrap();
                // The query mixes in-vocab terms with a document OOV so the
                // copy path carries gradient too.
                let query_tokens = words(&["cold", "crystal", "water"]);
                let triple = genrank::text::TrainingTriple {
                    query_id: "q".into(),
                    query_ids: vocab.encode_query(&query_tokens),
                    query_tokens,
                    doc_pos_id: "dp".into(),
                    doc_pos_tokens: docs[0].clone(),
                    doc_neg_id: "dn".into(),
                    doc_neg_tokens: docs[1].clone(),
                };
                let (_, grads) = triple_loss_and_grads(&model, &triple, kind, &vocab).unwrap();
                for (pi, tensor) in model.params.tensors().iter().enumerate() {
                    let coord = rng.gen_range(0..tensor.numel());
                    let analytic = grads[pi].data()[coord];
                    let fd = {
                        let mut up = GenerativeModel::new(model.config.clone()).unwrap();
                        up.params.tensors_mut()[pi].data_mut()[coord] += FD_H;
                        let hi = triple_loss_value(&up, &triple, kind, &vocab).unwrap();
                        up.params.tensors_mut()[pi].data_mut()[coord] -= 2.0 * FD_H;
                        let lo = triple_loss_value(&up, &triple, kind, &vocab).unwrap();
                        (hi - lo) / (2.0 * FD_H)
                    };
                    assert!(
                        gradcheck::relative_error(analytic, fd) < FD_TOL,
                        "{arch} {kind} seed {seed} param {} coord {coord}: {analytic} vs {fd}",
                        model.params.names()[pi]
                    );
                }
            }
        }
    }

    let elapsed = started.elapsed();
    assert!(
        elapsed.as_secs() < 120,
        "gradient suite took {elapsed:?}, budget is 2 minutes"
    );
    println!("acceptance 01 gradient-suite: PASS ({elapsed:.1?})");
}

// ── Criterion 2: distribution normalization ─────────────────────────────

#[test]
fn acceptance_02_distribution_normalization() {
    let pool = [
        "sun", "moon", "tide", "wind", "leaf", "stone", "bird", "fish", "rain", "snow", "dust",
        "fire", "root", "wave", "cloud", "seed",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(20_000);
    let mut calls = 0usize;
    for arch in Architecture::ALL {
        for model_round in 0..250 {
            let vocab_terms = rng.gen_range(6..=pool.len());
            let docsrc: Vec<Vec<String>> =
                vec![pool[..vocab_terms].iter().map(|s| s.to_string()).collect()];
            let streams: Vec<&[String]> = docsrc.iter().map(|d| d.as_slice()).collect();
            let vocab = Vocabulary::build(streams.iter().copied(), 1).unwrap();
            let model = GenerativeModel::new(ModelConfig {
                architecture: arch,
                embedding_dim: if rng.gen_bool(0.5) { 8 } else { 16 },
                hidden_dim: if rng.gen_bool(0.5) { 8 } else { 12 },
                n_transformer_layers: 1,
                n_heads: 2,
                feedforward_dim: 16,
                vocab_size: vocab.len(),
                dropout: 0.0,
                seed: model_round as u64 * 7 + arch as u64,
            })
            .unwrap();
            for _ in 0..5 {
                // Documents mix vocabulary terms and fresh OOV strings.
                let doc_len = rng.gen_range(1..=6);
                let doc: Vec<String> = (0..doc_len)
                    .map(|i| {
                        if rng.gen_bool(0.3) {
                            format!("oov{}{i}", rng.gen_range(0..4))
                        } else {
                            pool[rng.gen_range(0..vocab_terms)].to_string()
                        }
                    })
                    .collect();
                let enc = model.encode(&doc, &vocab).unwrap();
                let mut state = model.initial_decoder_state(&enc);
                let mut prev = SOS;
                for _ in 0..2 {
                    let (step, next) = model.decode_step(prev, &state, &enc).unwrap();
                    let dist_sum: f64 = step.final_dist.iter().sum();
                    let attn_sum: f64 = step.attention.iter().sum();
                    assert!(
                        (dist_sum - 1.0).abs() <= 1e-6,
                        "{arch}: final_dist sums to {dist_sum}"
                    );
                    assert!(
                        (attn_sum - 1.0).abs() <= 1e-6,
                        "{arch}: attention sums to {attn_sum}"
                    );
                    assert!(step.final_dist.iter().all(|&p| p >= 0.0), "{arch}");
                    calls += 1;
                    state = next;
                    prev = rng.gen_range(0..vocab.len() as u32);
                }
            }
        }
    }
    assert!(calls >= 10_000, "only {calls} decode_step calls exercised");
    println!("acceptance 02 distribution-normalization: PASS ({calls} calls)");
}

// ── Criterion 3: copy-mechanism discriminator ───────────────────────────

#[test]
fn acceptance_03_copy_mechanism_discriminator() {
    let spec = ToySpec::new(8, 4, 333);
    let corpus = toy::generate(&spec).unwrap();
    let vocab = build_vocab(&corpus, spec.recommended_min_frequency());

    for arch in Architecture::ALL {
        let model = GenerativeModel::new(ModelConfig::tiny(arch, vocab.len(), 404)).unwrap();
        let mut cases = 0usize;
        let mut nonzero = 0usize;
        let mut extended_mass_always_zero = true;
        for (qid, qtext) in corpus.train_queries.iter().chain(corpus.eval_queries.iter()) {
            let query_tokens = truncate_query(tokenize(qtext));
            let oov_terms: Vec<&String> =
                query_tokens.iter().filter(|t| !vocab.contains(t)).collect();
            assert!(!oov_terms.is_empty(), "{qid} lost its planted OOV term");
            let judged = corpus.qrels.judged(qid).unwrap();
            let mut doc_ids: Vec<&String> = judged.keys().collect();
            doc_ids.sort_unstable();
            for doc_id in doc_ids {
                let doc_tokens = tokenize(corpus.collection.text(doc_id).unwrap());
                let steps = model
                    .forward_teacher_forced(&doc_tokens, &vocab.encode_query(&query_tokens), &vocab)
                    .unwrap();
                let (_, _, ext) = genrank::text::encode_with_extension(&doc_tokens, &vocab);
                for (pos, tok) in query_tokens.iter().enumerate() {
                    if vocab.contains(tok) {
                        continue;
                    }
                    // Only document-side OOVs are reachable at all.
                    let Some(ext_id) = ext.oov_id(tok) else { continue };
                    cases += 1;
                    if steps[pos].final_dist[ext_id as usize] > 0.0 {
                        nonzero += 1;
                    }
                }
                for step in &steps {
                    if step.final_dist[vocab.len()..].iter().any(|&p| p != 0.0) {
                        extended_mass_always_zero = false;
                    }
                }
            }
        }
        assert!(cases > 100, "{arch}: too few planted-OOV cases ({cases})");
        if arch.uses_copy() {
            let rate = nonzero as f64 / cases as f64;
            assert!(
                rate > 0.99,
                "{arch}: copy mass present in only {rate:.4} of {cases} cases"
            );
        } else {
            assert!(
                extended_mass_always_zero,
                "{arch}: leaked probability onto extended ids"
            );
        }
    }
    println!("acceptance 03 copy-discriminator: PASS");
}

// ── Criterion 4: trainability ───────────────────────────────────────────

#[test]
fn acceptance_04_trainability() {
    let started = Instant::now();
    let spec = ToySpec::new(7, 0, 913);
    let corpus = toy::generate(&spec).unwrap();
    let vocab = build_vocab(&corpus, spec.recommended_min_frequency());
    let all = encode_triples(&corpus.triples, &corpus.collection, &corpus.train_queries, &vocab)
        .unwrap();
    let triples = &all[..50];

    for arch in Architecture::ALL {
        for kind in [
            LossKind::Nll,
            LossKind::Marg { margin: 1.0 },
            LossKind::Nl3u,
        ] {
            let mut model =
                GenerativeModel::new(ModelConfig::tiny(arch, vocab.len(), 300)).unwrap();
            let lr = if arch.uses_transformer() { 1e-3 } else { 2e-3 };
            let mut opts = TrainOptions::new(200, lr, 1234);
            opts.batch_size = 16;
            let report = train(&mut model, triples, &vocab, kind, &opts).unwrap();
            let reached = report
                .epochs
                .iter()
                .find(|e| e.pairwise_accuracy >= 0.95)
                .map(|e| e.epoch);
            assert!(
                reached.is_some(),
                "{arch} × {kind} never reached 0.95 (best {:.3})",
                report.best_accuracy()
            );
            println!(
                "  trainability {arch} × {kind}: 0.95 at epoch {}",
                reached.unwrap()
            );
        }
    }
    let elapsed = started.elapsed();
    assert!(
        elapsed.as_secs() < 1200,
        "trainability took {elapsed:?}, budget is 20 minutes"
    );
    println!("acceptance 04 trainability: PASS ({elapsed:.1?})");
}

// ── Shared trained fixture for criteria 5, 7, 11 ────────────────────────

struct RankedFixture {
    qrels: Qrels,
    trained: Vec<RankedList>,
    untrained: Vec<RankedList>,
    ql: Vec<RankedList>,
}

static FIXTURE: OnceLock<RankedFixture> = OnceLock::new();

fn ql_list(
    qid: &str,
    qtext: &str,
    candidates: &[genrank::text::RunEntry],
    lm: &CollectionLM,
) -> RankedList {
    let qtokens = truncate_query(tokenize(qtext));
    let mut scored: Vec<(String, f64)> = candidates
        .iter()
        .map(|c| (c.doc_id.clone(), lm.score(&qtokens, &c.doc_id).unwrap().0))
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    RankedList {
        query_id: qid.to_string(),
        entries: scored
            .into_iter()
            .map(|(doc_id, score)| RankedEntry {
                doc_id,
                score,
                grade: None,
                aggregates: None,
                profile: None,
            })
            .collect(),
    }
}

fn fixture() -> &'static RankedFixture {
    FIXTURE.get_or_init(|| {
        let spec = ToySpec::new(150, 125, 4242);
        let corpus = toy::generate(&spec).unwrap();
        let vocab = build_vocab(&corpus, spec.recommended_min_frequency());
        let triples =
            encode_triples(&corpus.triples, &corpus.collection, &corpus.train_queries, &vocab)
                .unwrap();

        let mut cfg = ModelConfig::tiny(Architecture::TPgn, vocab.len(), 77);
        cfg.embedding_dim = 24;
        cfg.hidden_dim = 24;
        cfg.feedforward_dim = 48;
        let untrained_model = GenerativeModel::new(cfg.clone()).unwrap();
        let mut model = GenerativeModel::new(cfg).unwrap();
        let mut opts = TrainOptions::new(10, 1e-3, 99);
        opts.batch_size = 32;
        train(&mut model, &triples, &vocab, LossKind::Nll, &opts).unwrap();

        let index = Bm25Index::build(&corpus.collection);
        let lm = CollectionLM::build(&corpus.collection, 1000.0).unwrap();
        let mut trained = Vec::new();
        let mut untrained = Vec::new();
        let mut ql = Vec::new();
        for (qid, qtext) in corpus.eval_queries.iter() {
            let candidates = index.topk(qtext, spec.candidates_k);
            assert_eq!(candidates.len(), spec.candidates_k, "{qid}");
            trained.push(
                rerank(&model, qid, qtext, &candidates, &corpus.collection, &vocab, Some(0.95))
                    .unwrap(),
            );
            untrained.push(
                rerank(
                    &untrained_model,
                    qid,
                    qtext,
                    &candidates,
                    &corpus.collection,
                    &vocab,
                    None,
                )
                .unwrap(),
            );
            ql.push(ql_list(qid, qtext, &candidates, &lm));
        }
        RankedFixture {
            qrels: corpus.qrels,
            trained,
            untrained,
            ql,
        }
    })
}

// ── Criterion 5: ranking-quality ordering ───────────────────────────────

#[test]
fn acceptance_05_ranking_quality() {
    let fx = fixture();
    assert_eq!(fx.trained.len(), 500, "expected 500 held-out queries");
    let per_query = |lists: &[RankedList]| -> Vec<f64> {
        lists.iter().map(|l| metrics::mrr(l, &fx.qrels, 10)).collect()
    };
    let trained = per_query(&fx.trained);
    let untrained_aligned = per_query(&fx.untrained);
    let ql_aligned = per_query(&fx.ql);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (m_tr, m_un, m_ql) = (mean(&trained), mean(&untrained_aligned), mean(&ql_aligned));

    assert!(
        m_tr - m_un >= 0.3,
        "trained {m_tr:.3} does not beat untrained {m_un:.3} by 0.3"
    );
    let (t_un, p_un) = paired_t_test(&trained, &untrained_aligned).unwrap();
    assert!(t_un > 0.0 && p_un < 0.05);

    assert!(m_tr > m_ql, "trained {m_tr:.3} vs ql {m_ql:.3}");
    let (t_ql, p_ql) = paired_t_test(&trained, &ql_aligned).unwrap();
    assert!(
        t_ql > 0.0 && p_ql < 0.05,
        "QL comparison not significant: t {t_ql:.2}, p {p_ql:.2e}"
    );
    println!(
        "acceptance 05 ranking-quality: PASS (trained {m_tr:.3}, untrained {m_un:.3}, \
         ql {m_ql:.3}, p vs ql {p_ql:.1e})"
    );
}

// ── Criterion 6: uncertainty formulas ───────────────────────────────────

#[test]
fn acceptance_06_uncertainty_formulas() {
    // Hand-derived nucleus example at p = 0.95.
    let nd = nucleus(&[0.5, 0.3, 0.15, 0.04, 0.01], 0.95).unwrap();
    assert_eq!(nd.support.len(), 3);
    for (p, want) in nd.probs.iter().zip([0.5263, 0.3158, 0.1579]) {
        assert!((p - want).abs() < 1e-4);
    }
    assert!((term_uncertainty(&nd) - 0.9932).abs() < 1e-4);

    // Uniform and one-hot entropies.
    let uniform = nucleus(&[0.25; 4], 1.0).unwrap();
    assert!((term_uncertainty(&uniform) - 4.0f64.ln()).abs() < 1e-4);
    let onehot = nucleus(&[0.0, 1.0, 0.0], 0.95).unwrap();
    assert!(term_uncertainty(&onehot).abs() < 1e-12);

    // Aggregation hand cases.
    let agg = query_aggregates(&[1.0, 1.0]).unwrap();
    assert!((agg.entropy - 2.0f64.ln()).abs() < 1e-12);
    let agg = query_aggregates(&[0.0, 2.0]).unwrap();
    assert_eq!((agg.mean, agg.variance, agg.max), (1.0, 1.0, 2.0));

    // Entropy bounds on 10,000 random distributions.
    let mut rng = ChaCha8Rng::seed_from_u64(6_000);
    for round in 0..10_000 {
        let n = rng.gen_range(2..40);
        let mut dist: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let sum: f64 = dist.iter().sum();
        dist.iter_mut().for_each(|p| *p /= sum);
        let p = rng.gen_range(0.05..=1.0);
        let nd = nucleus(&dist, p).unwrap();
        let h = term_uncertainty(&nd);
        let bound = (nd.support.len() as f64).ln();
        assert!(
            (-1e-12..=bound + 1e-9).contains(&h),
            "round {round}: entropy {h} outside [0, ln {}]",
            nd.support.len()
        );
    }
    println!("acceptance 06 uncertainty-formulas: PASS");
}

// ── Criterion 7: relevance–uncertainty sign ─────────────────────────────

#[test]
fn acceptance_07_relevance_uncertainty_sign() {
    let fx = fixture();
    let mut rel = Vec::new();
    let mut entropy = Vec::new();
    for list in &fx.trained {
        for e in &list.entries {
            rel.push(e.score);
            entropy.push(e.aggregates.expect("uncertainty was requested").entropy);
        }
    }
    assert!(rel.len() >= 300, "need ≥ 300 pairs, got {}", rel.len());
    let (r, p) = spearman_test(&rel, &entropy).unwrap();
    assert!(r < 0.0, "correlation not negative: {r:.3}");
    assert!(p < 0.05, "correlation not significant: p {p:.2e}");
    println!(
        "acceptance 07 relevance-uncertainty-sign: PASS (r {r:.3}, p {p:.1e}, n {})",
        rel.len()
    );
}

// ── Criterion 8: cut-off dominance ──────────────────────────────────────

#[test]
fn acceptance_08_cutoff_dominance() {
    let instances =
        toy::synthetic_cutoff_instances(&toy::SyntheticCutoffSpec::new(40, 2024)).unwrap();

    // The oracle must equal an exhaustive maximum on every list.
    for inst in &instances {
        let (k, f1) = oracle_cutoff(&inst.labels).unwrap();
        let mut best = (1usize, f64::NEG_INFINITY);
        for kk in 1..=inst.labels.len() {
            let v = f1_at(&inst.labels, kk).unwrap();
            if v > best.1 {
                best = (kk, v);
            }
        }
        assert_eq!((k, f1), best, "oracle disagrees with brute force");
    }

    let mut opts = EvalOptions::new(7);
    opts.trials = 50;
    opts.folds = 5;
    opts.predictor_epochs = 25;
    let report = evaluate(&instances, &opts).unwrap();
    let f1 = |m: Method| report.mean_f1[&m];
    assert!(f1(Method::Oracle) >= f1(Method::RelUncertainty) - 1e-12);
    assert!(f1(Method::RelUncertainty) >= f1(Method::Rel));
    assert!(f1(Method::Rel) >= f1(Method::Greedy));
    let gap = f1(Method::RelUncertainty) - f1(Method::Rel);
    assert!(gap >= 0.01, "uncertainty gain {gap:.4} below 0.01");
    println!(
        "acceptance 08 cutoff-dominance: PASS (oracle {:.3} ≥ rel+unc {:.3} ≥ rel {:.3} ≥ greedy {:.3})",
        f1(Method::Oracle),
        f1(Method::RelUncertainty),
        f1(Method::Rel),
        f1(Method::Greedy)
    );
}

// ── Criterion 9: metric oracles ─────────────────────────────────────────

fn mrr_brute(docs: &[String], qrels: &Qrels, qid: &str, cutoff: usize) -> f64 {
    for (i, d) in docs.iter().enumerate() {
        if i >= cutoff {
            break;
        }
        if qrels.grade(qid, d).unwrap_or(0) >= 1 {
            return 1.0 / (i as f64 + 1.0);
        }
    }
    0.0
}

fn ndcg_brute(docs: &[String], qrels: &Qrels, qid: &str) -> f64 {
    let gain_at = |grade: u32, rank: usize| grade as f64 / ((rank + 2) as f64).log2();
    let mut dcg = 0.0;
    for (i, d) in docs.iter().take(10).enumerate() {
        dcg += gain_at(qrels.grade(qid, d).unwrap_or(0), i);
    }
    let mut all: Vec<u32> = qrels
        .judged(qid)
        .map(|m| m.values().copied().collect())
        .unwrap_or_default();
    all.sort_unstable_by(|a, b| b.cmp(a));
    let mut ideal = 0.0;
    for (i, g) in all.into_iter().take(10).enumerate() {
        ideal += gain_at(g, i);
    }
    if ideal == 0.0 {
        0.0
    } else {
        dcg / ideal
    }
}

fn recall_brute(docs: &[String], qrels: &Qrels, qid: &str, k: usize) -> Option<f64> {
    let total = qrels
        .judged(qid)?
        .values()
        .filter(|&&g| g >= 1)
        .count();
    if total == 0 {
        return None;
    }
    let hits = docs
        .iter()
        .take(k)
        .filter(|d| qrels.grade(qid, d).unwrap_or(0) >= 1)
        .count();
    Some(hits as f64 / total as f64)
}

#[test]
fn acceptance_09_metric_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(900);
    for round in 0..1000 {
        let n = rng.gen_range(1..=6usize);
        let qid = format!("q{round}");
        let mut docs: Vec<String> = (0..n + 2).map(|i| format!("d{i}")).collect();
        // Shuffle so judged docs land anywhere (or outside the ranking).
        for i in (1..docs.len()).rev() {
            docs.swap(i, rng.gen_range(0..=i));
        }
        let ranked_docs: Vec<String> = docs[..n].to_vec();
        let mut qrels = Qrels::default();
        for d in &docs {
            if rng.gen_bool(0.7) {
                qrels.insert(qid.clone(), d.clone(), u32::from(rng.gen_bool(0.4)));
            }
        }
        let list = RankedList {
            query_id: qid.clone(),
            entries: ranked_docs
                .iter()
                .enumerate()
                .map(|(i, d)| RankedEntry {
                    doc_id: d.clone(),
                    score: -(i as f64),
                    grade: None,
                    aggregates: None,
                    profile: None,
                })
                .collect(),
        };
        let cutoff = rng.gen_range(1..=8usize);
        let k = rng.gen_range(1..=n);
        assert_eq!(
            metrics::mrr(&list, &qrels, cutoff),
            mrr_brute(&ranked_docs, &qrels, &qid, cutoff),
            "mrr mismatch round {round}"
        );
        assert_eq!(
            metrics::ndcg_at_10(&list, &qrels),
            ndcg_brute(&ranked_docs, &qrels, &qid),
            "ndcg mismatch round {round}"
        );
        assert_eq!(
            metrics::recall(&list, &qrels, k),
            recall_brute(&ranked_docs, &qrels, &qid, k),
            "recall mismatch round {round}"
        );
    }
    println!("acceptance 09 metric-oracles: PASS");
}

// ── Criterion 10: end-to-end determinism ────────────────────────────────

fn run_cmd(dir: &std::path::Path, bin: &str, args: &[&str]) {
    let status = std::process::Command::new(bin)
        .current_dir(dir)
        .args(args)
        .stdout(std::process::Stdio::null())
        .status()
        .expect("spawn pipeline command");
    assert!(status.success(), "{bin} {args:?} failed: {status}");
}

fn tree_bytes(root: &std::path::Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

#[test]
fn acceptance_10_pipeline_determinism() {
    let started = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    run_cmd(
        dir,
        env!("CARGO_BIN_EXE_genrank-toygen"),
        &[
            "--out-dir",
            "data",
            "--train-entities",
            "30",
            "--eval-entities",
            "20",
            "--candidates",
            "10",
            "--seed",
            "5",
        ],
    );
    std::fs::write(
        dir.join("exp.cfg"),
        "collection = data/collection.tsv\n\
         queries = data/queries_train.tsv\n\
         eval_queries = data/queries_eval.tsv\n\
         triples = data/triples.tsv\n\
         qrels = data/qrels.txt\n\
         run = data/bm25.run\n\
         tag = pipe\n\
         architecture = t_pgn\n\
         embedding_dim = 16\n\
         hidden_dim = 16\n\
         n_transformer_layers = 1\n\
         n_heads = 2\n\
         feedforward_dim = 32\n\
         loss = nll\n\
         epochs = 6\n\
         lr = 0.002\n\
         batch_size = 16\n\
         min_frequency = 9\n\
         nucleus_p = 0.95\n\
         cutoff_folds = 5\n\
         cutoff_trials = 2\n\
         predictor_epochs = 15\n\
         max_len = 10\n\
         seed = 5\n",
    )
    .unwrap();

    let genrank = env!("CARGO_BIN_EXE_genrank");
    for out in ["out1", "out2"] {
        let rerank_run = format!("run={out}/pipe/runs/rerank.run");
        let run_step = |extra: &[&str]| {
            let mut v: Vec<&str> = vec!["--config", "exp.cfg", "--out", out];
            v.extend_from_slice(extra);
            run_cmd(dir, genrank, &v);
        };
        run_step(&["build-vocab"]);
        run_step(&["train"]);
        run_step(&["rerank"]);
        run_step(&["--set", &rerank_run, "--set", "baseline_run=data/bm25.run", "eval"]);
        run_step(&["--set", &rerank_run, "uncertainty"]);
        run_step(&["--set", &rerank_run, "cutoff"]);
        run_step(&["generate"]);
    }

    let a = tree_bytes(&dir.join("out1"));
    let b = tree_bytes(&dir.join("out2"));
    let names_a: Vec<&String> = a.keys().collect();
    let names_b: Vec<&String> = b.keys().collect();
    assert_eq!(names_a, names_b, "output file sets differ");
    assert!(a.len() >= 12, "unexpectedly few outputs: {names_a:?}");
    for (name, bytes) in &a {
        assert_eq!(bytes, &b[name], "output {name} differs between runs");
    }
    let elapsed = started.elapsed();
    assert!(
        elapsed.as_secs() < 1800,
        "pipeline pair took {elapsed:?}, budget is 30 minutes"
    );
    println!(
        "acceptance 10 pipeline-determinism: PASS ({} files byte-identical, {elapsed:.1?})",
        a.len()
    );
}

// ── Criterion 11: EOS-position uncertainty (soft) ───────────────────────

#[test]
fn acceptance_11_position_uncertainty_eos() {
    let fx = fixture();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for list in &fx.trained {
        for e in &list.entries {
            rows.push(
                e.profile
                    .as_ref()
                    .expect("trained lists keep profiles")
                    .term_uncertainties()
                    .expect("uncertainty was requested"),
            );
        }
    }
    let stats = position_stats(&rows);
    let mut all_min_at_eos = true;
    for (len, summaries) in &stats {
        let means: Vec<f64> = summaries.iter().map(|s| s.mean).collect();
        let last = *means.last().unwrap();
        let min = means.iter().copied().fold(f64::INFINITY, f64::min);
        let eos_is_min = last <= min + 1e-12;
        all_min_at_eos &= eos_is_min;
        println!(
            "  position-uncertainty len {len} (n {}): means {:?}, eos-is-min {}",
            summaries[0].count,
            means.iter().map(|m| (m * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
            eos_is_min
        );
    }
    // Learned-behavior diagnostic: reported, never a hard failure.
    if all_min_at_eos {
        println!("acceptance 11 position-uncertainty-eos: PASS");
    } else {
        println!(
            "acceptance 11 position-uncertainty-eos: WARN (terminator is not the minimum; \
             on this corpus the copied entity position is the most certain step)"
        );
    }
}
