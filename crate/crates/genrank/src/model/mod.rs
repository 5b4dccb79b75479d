//! The four generative ranking architectures.
//!
//! Each model encodes a document and decodes a query one token at a time,
//! emitting per-step probability distributions over the extended vocabulary
//! (base terms plus this document's OOV terms). The PGN family mixes the
//! decoder softmax with the attention distribution through a generation
//! gate, so document OOV terms can receive probability; the other two
//! architectures put exactly zero mass on extended ids.

mod checkpoint;
pub(crate) mod net;
mod params;

use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, save_checkpoint, TrainMeta};
pub use net::{positional_encoding, Dropout};
pub use params::{BoundParams, ParamBuilder, ParamSet};

use crate::autodiff::{Tape, Tensor};
use crate::error::{Error, Result};
use crate::text::{encode_with_extension, ExtendedVocabulary, Vocabulary, EOS, SOS, UNK};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    Seq2SeqAttention,
    Pgn,
    Transf2Transf,
    TPgn,
}

impl Architecture {
    pub const ALL: [Architecture; 4] = [
        Architecture::Seq2SeqAttention,
        Architecture::Pgn,
        Architecture::Transf2Transf,
        Architecture::TPgn,
    ];

    /// Whether the decoder mixes in the copy distribution.
    pub fn uses_copy(&self) -> bool {
        matches!(self, Architecture::Pgn | Architecture::TPgn)
    }

    /// Whether the decoder is an LSTM (vs a transformer stack).
    pub fn decoder_is_recurrent(&self) -> bool {
        !matches!(self, Architecture::Transf2Transf)
    }

    pub fn uses_transformer(&self) -> bool {
        matches!(self, Architecture::Transf2Transf | Architecture::TPgn)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Architecture::Seq2SeqAttention => "seq2seq_attention",
            Architecture::Pgn => "pgn",
            Architecture::Transf2Transf => "transf2transf",
            Architecture::TPgn => "t_pgn",
        }
    }
}

impl std::fmt::Display for Architecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "seq2seq_attention" => Ok(Architecture::Seq2SeqAttention),
            "pgn" => Ok(Architecture::Pgn),
            "transf2transf" => Ok(Architecture::Transf2Transf),
            "t_pgn" => Ok(Architecture::TPgn),
            other => Err(Error::Config(format!(
                "unknown architecture {other:?} (expected seq2seq_attention, pgn, transf2transf, or t_pgn)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub embedding_dim: usize,
    pub hidden_dim: usize,
    pub n_transformer_layers: usize,
    pub n_heads: usize,
    pub feedforward_dim: usize,
    pub vocab_size: usize,
    pub dropout: f64,
    pub seed: u64,
}

impl ModelConfig {
    /// BERT-Tiny-shaped defaults: 2 layers, 2 heads, feed-forward 512,
    /// embedding 128.
    pub fn default_for(architecture: Architecture, vocab_size: usize, seed: u64) -> Self {
        ModelConfig {
            architecture,
            embedding_dim: 128,
            hidden_dim: 256,
            n_transformer_layers: 2,
            n_heads: 2,
            feedforward_dim: 512,
            vocab_size,
            dropout: 0.0,
            seed,
        }
    }

    /// Small configuration for tests and toy corpora.
    pub fn tiny(architecture: Architecture, vocab_size: usize, seed: u64) -> Self {
        ModelConfig {
            architecture,
            embedding_dim: 16,
            hidden_dim: 16,
            n_transformer_layers: 1,
            n_heads: 2,
            feedforward_dim: 32,
            vocab_size,
            dropout: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("embedding_dim", self.embedding_dim),
            ("hidden_dim", self.hidden_dim),
            ("n_transformer_layers", self.n_transformer_layers),
            ("n_heads", self.n_heads),
            ("feedforward_dim", self.feedforward_dim),
        ];
        for (name, v) in positive {
            if v < 1 {
                return Err(Error::Config(format!("{name} must be at least 1, got {v}")));
            }
        }
        if self.vocab_size < 4 {
            return Err(Error::Config(format!(
                "vocab_size {} cannot hold the four specials",
                self.vocab_size
            )));
        }
        if self.architecture.uses_transformer() && self.embedding_dim % self.n_heads != 0 {
            return Err(Error::Config(format!(
                "embedding_dim {} not divisible by n_heads {}",
                self.embedding_dim, self.n_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        Ok(())
    }
}

/// Encoded document: contextual embeddings, decoder initialization, and the
/// document's extended vocabulary.
#[derive(Clone, Debug)]
pub struct EncoderState {
    /// `[L × dk]`: LSTM states (seq2seq/pgn) or transformer outputs
    /// (transf2transf/t_pgn).
    pub contextual_embeddings: Tensor,
    /// Final encoder LSTM state, absent for the pure transformer.
    pub final_state: Option<(Tensor, Tensor)>,
    pub extended_vocab: ExtendedVocabulary,
    pub doc_base_ids: Vec<u32>,
    pub doc_extended_ids: Vec<u32>,
}

impl EncoderState {
    pub fn doc_len(&self) -> usize {
        self.doc_base_ids.len()
    }

    pub fn extended_size(&self) -> usize {
        self.extended_vocab.len()
    }
}

/// One generation step's output.
#[derive(Clone, Debug)]
pub struct DecoderStepOutput {
    /// Probabilities over base vocab ∪ document OOVs; sums to 1 ± 1e-6.
    pub final_dist: Vec<f64>,
    /// Attention over document positions; sums to 1 ± 1e-6.
    pub attention: Vec<f64>,
    /// Generation gate, copy architectures only.
    pub p_gen: Option<f64>,
}

/// Decoder progress between incremental steps.
#[derive(Clone, Debug)]
pub enum DecoderState {
    Recurrent { h: Tensor, c: Tensor },
    /// Base-id inputs consumed so far (transformer decoder re-runs the
    /// prefix with causal masking).
    Prefix { inputs: Vec<u32> },
}

pub struct GenerativeModel {
    pub config: ModelConfig,
    pub params: ParamSet,
}

impl GenerativeModel {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let params = net::build_params(&config);
        Ok(GenerativeModel { config, params })
    }

    pub fn from_parts(config: ModelConfig, params: ParamSet) -> Result<Self> {
        config.validate()?;
        Ok(GenerativeModel { config, params })
    }

    pub(crate) fn net_ctx<'a, 't>(
        &'a self,
        tape: &'t Tape,
        dropout: Option<&'a Dropout>,
    ) -> net::NetCtx<'a, 't> {
        net::NetCtx {
            tape,
            cfg: &self.config,
            params: self.params.bind(tape),
            dropout,
        }
    }

    /// Encode document tokens into an [`EncoderState`].
    pub fn encode(&self, doc_tokens: &[String], vocab: &Vocabulary) -> Result<EncoderState> {
        if doc_tokens.is_empty() {
            return Err(Error::EmptySequence("cannot encode an empty document".into()));
        }
        let (base_ids, extended_ids, extended_vocab) = encode_with_extension(doc_tokens, vocab);
        let tape = Tape::inference();
        let ctx = self.net_ctx(&tape, None);
        let enc = ctx.encode_doc(&base_ids)?;
        Ok(EncoderState {
            contextual_embeddings: enc.ctx.value(),
            final_state: enc.init_state.map(|(h, c)| (h.value(), c.value())),
            extended_vocab,
            doc_base_ids: base_ids,
            doc_extended_ids: extended_ids,
        })
    }

    pub fn initial_decoder_state(&self, enc: &EncoderState) -> DecoderState {
        match &enc.final_state {
            Some((h, c)) => DecoderState::Recurrent {
                h: h.clone(),
                c: c.clone(),
            },
            None => DecoderState::Prefix { inputs: Vec::new() },
        }
    }

    /// Rebuild tape-level encoder vars from a detached [`EncoderState`].
    fn rebind_encoded<'t>(
        &self,
        ctx: &net::NetCtx<'_, 't>,
        enc: &EncoderState,
    ) -> Result<net::EncodedVars<'t>> {
        let ctx_var = ctx.tape.constant(&enc.contextual_embeddings);
        let proj_keys = if self.config.architecture.decoder_is_recurrent() {
            Some(ctx_var.matmul(ctx.params.var("attention.w_keys")?)?)
        } else {
            None
        };
        Ok(net::EncodedVars {
            ctx: ctx_var,
            init_state: None, // state travels in DecoderState
            proj_keys,
            doc_len: enc.doc_len(),
        })
    }

    /// One incremental generation step conditioned on `prev_token_id`.
    pub fn decode_step(
        &self,
        prev_token_id: u32,
        state: &DecoderState,
        enc: &EncoderState,
    ) -> Result<(DecoderStepOutput, DecoderState)> {
        if prev_token_id as usize >= self.config.vocab_size {
            return Err(Error::Contract(format!(
                "decode_step input id {prev_token_id} out of base-vocabulary range {}",
                self.config.vocab_size
            )));
        }
        let tape = Tape::inference();
        let net = self.net_ctx(&tape, None);
        let encoded = self.rebind_encoded(&net, enc)?;
        let scatter = net::scatter_spec(&enc.doc_extended_ids, enc.extended_size());
        match state {
            DecoderState::Recurrent { h, c } => {
                let hv = tape.constant(h);
                let cv = tape.constant(c);
                let (step, nh, nc) =
                    net.one_recurrent_step(&encoded, prev_token_id, hv, cv, &scatter)?;
                Ok((
                    step_output(&step),
                    DecoderState::Recurrent {
                        h: nh.value(),
                        c: nc.value(),
                    },
                ))
            }
            DecoderState::Prefix { inputs } => {
                let mut inputs = inputs.clone();
                inputs.push(prev_token_id);
                let steps = net.teacher_forced(&encoded, &inputs, &scatter)?;
                let last = steps.last().expect("at least one step");
                Ok((
                    step_output(last),
                    DecoderState::Prefix { inputs },
                ))
            }
        }
    }

    /// Teacher-forced pass over a full query (base ids ending in `EOS`);
    /// one output per query position.
    pub fn forward_teacher_forced(
        &self,
        doc_tokens: &[String],
        query_ids: &[u32],
        vocab: &Vocabulary,
    ) -> Result<Vec<DecoderStepOutput>> {
        if query_ids.is_empty() {
            return Err(Error::EmptySequence("teacher forcing needs a query".into()));
        }
        if *query_ids.last().unwrap() != EOS {
            return Err(Error::Contract("query ids must end with <eos>".into()));
        }
        let (base_ids, extended_ids, ext) = {
            if doc_tokens.is_empty() {
                return Err(Error::EmptySequence("cannot encode an empty document".into()));
            }
            encode_with_extension(doc_tokens, vocab)
        };
        let tape = Tape::inference();
        let net = self.net_ctx(&tape, None);
        let encoded = net.encode_doc(&base_ids)?;
        let scatter = net::scatter_spec(&extended_ids, ext.len());
        let inputs = teacher_inputs(query_ids);
        let steps = net.teacher_forced(&encoded, &inputs, &scatter)?;
        Ok(steps.iter().map(step_output).collect())
    }

    /// Greedy query generation: argmax token per step (ties to the lowest
    /// id), stopping at `<EOS>` or `max_len`. Returns extended ids.
    pub fn greedy_generate(
        &self,
        doc_tokens: &[String],
        vocab: &Vocabulary,
        max_len: usize,
    ) -> Result<Vec<u32>> {
        if max_len < 1 {
            return Err(Error::Contract("greedy_generate needs max_len ≥ 1".into()));
        }
        let enc = self.encode(doc_tokens, vocab)?;
        let mut state = self.initial_decoder_state(&enc);
        let mut prev = SOS;
        let mut out = Vec::new();
        for _ in 0..max_len {
            let (step, next_state) = self.decode_step(prev, &state, &enc)?;
            let tok = argmax_lowest(&step.final_dist) as u32;
            if tok == EOS {
                break;
            }
            out.push(tok);
            state = next_state;
            // OOV tokens have no base embedding; feed back <unk>.
            prev = if (tok as usize) < self.config.vocab_size {
                tok
            } else {
                UNK
            };
        }
        Ok(out)
    }
}

/// A tape-level teacher-forced pass plus the extended-id targets to score.
pub(crate) struct ScoredPass<'t> {
    pub steps: Vec<net::StepVars<'t>>,
    pub targets: Vec<usize>,
    #[allow(dead_code)]
    pub extended: ExtendedVocabulary,
}

impl GenerativeModel {
    /// Encode `doc_tokens` and run the decoder teacher-forced on
    /// `query_tokens` (terminator appended), on the caller's tape.
    pub(crate) fn scored_pass<'a, 't>(
        &'a self,
        net: &net::NetCtx<'a, 't>,
        doc_tokens: &[String],
        query_tokens: &[String],
        vocab: &Vocabulary,
    ) -> Result<ScoredPass<'t>> {
        if doc_tokens.is_empty() {
            return Err(Error::EmptySequence("cannot encode an empty document".into()));
        }
        if query_tokens.is_empty() {
            return Err(Error::EmptySequence("cannot score an empty query".into()));
        }
        let (base_ids, ext_ids, ext) = encode_with_extension(doc_tokens, vocab);
        let encoded = net.encode_doc(&base_ids)?;
        let scatter = net::scatter_spec(&ext_ids, ext.len());
        let query_ids = vocab.encode_query(query_tokens);
        let inputs = teacher_inputs(&query_ids);
        let steps = net.teacher_forced(&encoded, &inputs, &scatter)?;
        let targets = score_targets(
            self.config.architecture.uses_copy(),
            query_tokens,
            &ext,
            vocab,
        );
        Ok(ScoredPass {
            steps,
            targets,
            extended: ext,
        })
    }
}

/// Per-position ids to score: base id when in vocabulary, the document's
/// extended id for OOV terms under copy architectures, `<unk>` otherwise;
/// the final position is `<EOS>`.
pub(crate) fn score_targets(
    uses_copy: bool,
    query_tokens: &[String],
    ext: &ExtendedVocabulary,
    vocab: &Vocabulary,
) -> Vec<usize> {
    let mut targets: Vec<usize> = query_tokens
        .iter()
        .map(|tok| match vocab.id(tok) {
            Some(id) => id as usize,
            None => {
                if uses_copy {
                    ext.oov_id(tok).map(|i| i as usize).unwrap_or(UNK as usize)
                } else {
                    UNK as usize
                }
            }
        })
        .collect();
    targets.push(EOS as usize);
    targets
}

/// Sum of per-position log-probabilities at the targets, as a tape scalar.
pub(crate) fn pass_log_prob<'t>(pass: &ScoredPass<'t>) -> Result<crate::autodiff::Var<'t>> {
    let picks: Vec<crate::autodiff::Var<'t>> = pass
        .steps
        .iter()
        .zip(&pass.targets)
        .map(|(s, &t)| s.final_dist.select(t))
        .collect::<Result<_>>()?;
    Ok(crate::autodiff::concat(&picks)?.ln().sum())
}

/// Decoder inputs for a teacher-forced pass: `<SOS>` then the query prefix.
pub fn teacher_inputs(query_ids: &[u32]) -> Vec<u32> {
    let mut inputs = Vec::with_capacity(query_ids.len());
    inputs.push(SOS);
    inputs.extend_from_slice(&query_ids[..query_ids.len() - 1]);
    inputs
}

fn step_output(step: &net::StepVars<'_>) -> DecoderStepOutput {
    DecoderStepOutput {
        final_dist: step.final_dist.value().into_data(),
        attention: step.attention.value().into_data(),
        p_gen: step.p_gen.map(|p| p.scalar_value()),
    }
}

/// Argmax with ties broken toward the lowest index.
pub fn argmax_lowest(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}
