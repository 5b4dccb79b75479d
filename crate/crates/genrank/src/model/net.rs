//! Forward-pass builders for the four architectures.
//!
//! Everything here works on tape [`Var`]s so the same code path serves
//! training (gradient tape) and scoring (inference tape). The LSTM family
//! decodes step by step; the transformer decoder processes the whole
//! teacher-forced query in one causally masked pass.

use std::cell::RefCell;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{concat, linear, linear_rows, lstm_cell, stack_rows, Tape, Tensor, Var};
use crate::autodiff::concat_cols;
use crate::error::{Error, Result};
use crate::model::params::{BoundParams, ParamBuilder, ParamSet};
use crate::model::{Architecture, ModelConfig};

const LN_EPS: f64 = 1e-5;

/// Sinusoidal positional encoding, `[len × dim]`.
pub fn positional_encoding(len: usize, dim: usize) -> Tensor {
    let mut data = vec![0.0; len * dim];
    for pos in 0..len {
        for i in 0..dim {
            let pair = (i / 2 * 2) as f64;
            let angle = pos as f64 / 10000f64.powf(pair / dim as f64);
            data[pos * dim + i] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    Tensor::new(vec![len, dim], data).expect("positional encoding shape")
}

fn transformer_layer_params(b: &mut ParamBuilder, prefix: &str, dim: usize, ff: usize, cross: bool) {
    let attn = |b: &mut ParamBuilder, name: &str| {
        b.weight(format!("{name}.wq"), &[dim, dim]);
        b.weight(format!("{name}.wk"), &[dim, dim]);
        b.weight(format!("{name}.wv"), &[dim, dim]);
        b.weight(format!("{name}.wo"), &[dim, dim]);
        b.zeros(format!("{name}.bq"), &[dim]);
        b.zeros(format!("{name}.bk"), &[dim]);
        b.zeros(format!("{name}.bv"), &[dim]);
        b.zeros(format!("{name}.bo"), &[dim]);
    };
    attn(b, &format!("{prefix}.self_attn"));
    b.ones(format!("{prefix}.ln1.gamma"), &[dim]);
    b.zeros(format!("{prefix}.ln1.beta"), &[dim]);
    if cross {
        attn(b, &format!("{prefix}.cross_attn"));
        b.ones(format!("{prefix}.ln_cross.gamma"), &[dim]);
        b.zeros(format!("{prefix}.ln_cross.beta"), &[dim]);
    }
    b.weight(format!("{prefix}.ff.w1"), &[dim, ff]);
    b.zeros(format!("{prefix}.ff.b1"), &[ff]);
    b.weight(format!("{prefix}.ff.w2"), &[ff, dim]);
    b.zeros(format!("{prefix}.ff.b2"), &[dim]);
    b.ones(format!("{prefix}.ln2.gamma"), &[dim]);
    b.zeros(format!("{prefix}.ln2.beta"), &[dim]);
}

/// Deterministic parameter construction for an architecture.
pub fn build_params(cfg: &ModelConfig) -> ParamSet {
    let mut b = ParamBuilder::new(cfg.seed);
    let (v, e, h, ff) = (
        cfg.vocab_size,
        cfg.embedding_dim,
        cfg.hidden_dim,
        cfg.feedforward_dim,
    );
    b.weight("embedding", &[v, e]);
    match cfg.architecture {
        Architecture::Seq2SeqAttention | Architecture::Pgn => {
            b.weight("encoder_lstm.weight", &[4 * h, e + h]);
            b.zeros("encoder_lstm.bias", &[4 * h]);
            b.weight("decoder_lstm.weight", &[4 * h, e + h]);
            b.zeros("decoder_lstm.bias", &[4 * h]);
            // Additive attention over encoder hidden states (width h).
            b.weight("attention.w_keys", &[h, h]);
            b.weight("attention.w_state", &[h, h]);
            b.zeros("attention.bias", &[h]);
            b.weight("attention.v", &[h]);
            b.weight("output.w1", &[2 * h, h]);
            b.zeros("output.b1", &[h]);
            b.weight("output.w2", &[h, v]);
            b.zeros("output.b2", &[v]);
            if cfg.architecture == Architecture::Pgn {
                b.weight("copy_gate.w", &[h + h + e, 1]);
                b.zeros("copy_gate.b", &[1]);
            }
        }
        Architecture::Transf2Transf => {
            for i in 0..cfg.n_transformer_layers {
                transformer_layer_params(&mut b, &format!("enc.layer{i}"), e, ff, false);
            }
            for i in 0..cfg.n_transformer_layers {
                transformer_layer_params(&mut b, &format!("dec.layer{i}"), e, ff, true);
            }
            b.weight("output.w", &[e, v]);
            b.zeros("output.b", &[v]);
        }
        Architecture::TPgn => {
            for i in 0..cfg.n_transformer_layers {
                transformer_layer_params(&mut b, &format!("enc.layer{i}"), e, ff, false);
            }
            // Attention keys/values are the transformer outputs (width e).
            b.weight("encoder_lstm.weight", &[4 * h, e + h]);
            b.zeros("encoder_lstm.bias", &[4 * h]);
            b.weight("decoder_lstm.weight", &[4 * h, e + h]);
            b.zeros("decoder_lstm.bias", &[4 * h]);
            b.weight("attention.w_keys", &[e, h]);
            b.weight("attention.w_state", &[h, h]);
            b.zeros("attention.bias", &[h]);
            b.weight("attention.v", &[h]);
            b.weight("output.w1", &[h + e, h]);
            b.zeros("output.b1", &[h]);
            b.weight("output.w2", &[h, v]);
            b.zeros("output.b2", &[v]);
            b.weight("copy_gate.w", &[e + h + e, 1]);
            b.zeros("copy_gate.b", &[1]);
        }
    }
    b.finish()
}

/// Dropout mask source for training; inactive when the rate is zero.
pub struct Dropout {
    rate: f64,
    rng: RefCell<ChaCha8Rng>,
}

impl Dropout {
    pub fn new(rate: f64, seed: u64) -> Option<Self> {
        if rate <= 0.0 {
            None
        } else {
            Some(Dropout {
                rate,
                rng: RefCell::new(ChaCha8Rng::seed_from_u64(seed)),
            })
        }
    }
}

/// Everything a forward pass needs: the tape, the config, and bound
/// parameters.
pub struct NetCtx<'a, 't> {
    pub tape: &'t Tape,
    pub cfg: &'a ModelConfig,
    pub params: BoundParams<'a, 't>,
    pub dropout: Option<&'a Dropout>,
}

/// Encoded document on the tape.
pub struct EncodedVars<'t> {
    /// Contextual embeddings `[L × dk]`: LSTM states for seq2seq/pgn,
    /// transformer outputs for transf2transf/t_pgn.
    pub ctx: Var<'t>,
    /// Decoder LSTM initial state (LSTM-decoder family only).
    pub init_state: Option<(Var<'t>, Var<'t>)>,
    /// Cached `ctx · w_keys` for additive attention.
    pub proj_keys: Option<Var<'t>>,
    pub doc_len: usize,
}

/// One decode step's distributions on the tape.
pub struct StepVars<'t> {
    /// Probabilities over base vocab ∪ document OOVs.
    pub final_dist: Var<'t>,
    /// Attention over document positions.
    pub attention: Var<'t>,
    pub p_gen: Option<Var<'t>>,
}

/// How copy mass maps onto the extended vocabulary for one document.
pub struct ScatterSpec {
    pub ext_ids: Vec<usize>,
    pub ext_size: usize,
}

impl<'a, 't> NetCtx<'a, 't> {
    fn p(&self, name: &str) -> Result<Var<'t>> {
        self.params.var(name)
    }

    fn drop(&self, x: Var<'t>) -> Result<Var<'t>> {
        match self.dropout {
            None => Ok(x),
            Some(d) => {
                let n = x.numel();
                let keep = 1.0 - d.rate;
                let mut rng = d.rng.borrow_mut();
                let mask: Vec<f64> = (0..n)
                    .map(|_| {
                        if rng.gen::<f64>() < d.rate {
                            0.0
                        } else {
                            1.0 / keep
                        }
                    })
                    .collect();
                let shape = x.shape();
                let m = self
                    .tape
                    .constant(&Tensor::new(shape, mask).expect("mask shape"));
                x.mul(m)
            }
        }
    }

    /// Look up embeddings for base-vocabulary ids, `[len × E]`.
    fn embed(&self, ids: &[u32]) -> Result<Var<'t>> {
        let table = self.p("embedding")?;
        let idx: Vec<usize> = ids.iter().map(|&i| i as usize).collect();
        if let Some(&bad) = idx.iter().find(|&&i| i >= self.cfg.vocab_size) {
            return Err(Error::Contract(format!(
                "token id {bad} out of range for vocabulary of {}",
                self.cfg.vocab_size
            )));
        }
        table.gather_rows(&idx)
    }

    fn add_positional(&self, x: Var<'t>, len: usize) -> Result<Var<'t>> {
        let pe = self
            .tape
            .constant(&positional_encoding(len, self.cfg.embedding_dim));
        x.add(pe)
    }

    /// Multi-head attention of `x_q` over `x_kv`; returns the output and the
    /// head-averaged attention matrix `[T × L]`.
    fn mha(
        &self,
        x_q: Var<'t>,
        x_kv: Var<'t>,
        prefix: &str,
        mask: Option<&[bool]>,
    ) -> Result<(Var<'t>, Var<'t>)> {
        let heads = self.cfg.n_heads;
        let dim = self.cfg.embedding_dim;
        let dh = dim / heads;
        let q = linear_rows(x_q, self.p(&format!("{prefix}.wq"))?, self.p(&format!("{prefix}.bq"))?)?;
        let k = linear_rows(x_kv, self.p(&format!("{prefix}.wk"))?, self.p(&format!("{prefix}.bk"))?)?;
        let v = linear_rows(x_kv, self.p(&format!("{prefix}.wv"))?, self.p(&format!("{prefix}.bv"))?)?;
        let mut outs = Vec::with_capacity(heads);
        let mut attn_sum: Option<Var<'t>> = None;
        for hi in 0..heads {
            let (a, b) = (hi * dh, (hi + 1) * dh);
            let qh = q.slice_cols(a, b)?;
            let kh = k.slice_cols(a, b)?;
            let vh = v.slice_cols(a, b)?;
            let scores = qh
                .matmul(kh.transpose())?
                .scale(1.0 / (dh as f64).sqrt());
            let attn = scores.softmax_rows(mask)?;
            outs.push(attn.matmul(vh)?);
            attn_sum = Some(match attn_sum {
                None => attn,
                Some(s) => s.add(attn)?,
            });
        }
        let merged = concat_cols(&outs)?;
        let out = linear_rows(
            merged,
            self.p(&format!("{prefix}.wo"))?,
            self.p(&format!("{prefix}.bo"))?,
        )?;
        let avg_attn = attn_sum.expect("at least one head").scale(1.0 / heads as f64);
        Ok((out, avg_attn))
    }

    fn feed_forward(&self, x: Var<'t>, prefix: &str) -> Result<Var<'t>> {
        let hidden = linear_rows(
            x,
            self.p(&format!("{prefix}.w1"))?,
            self.p(&format!("{prefix}.b1"))?,
        )?
        .relu();
        linear_rows(
            hidden,
            self.p(&format!("{prefix}.w2"))?,
            self.p(&format!("{prefix}.b2"))?,
        )
    }

    fn layer_norm(&self, x: Var<'t>, prefix: &str) -> Result<Var<'t>> {
        x.layer_norm(
            self.p(&format!("{prefix}.gamma"))?,
            self.p(&format!("{prefix}.beta"))?,
            LN_EPS,
        )
    }

    /// Post-norm transformer encoder stack over `[L × E]` embeddings.
    fn encoder_stack(&self, mut x: Var<'t>) -> Result<Var<'t>> {
        for i in 0..self.cfg.n_transformer_layers {
            let prefix = format!("enc.layer{i}");
            let (a, _) = self.mha(x, x, &format!("{prefix}.self_attn"), None)?;
            x = self.layer_norm(x.add(self.drop(a)?)?, &format!("{prefix}.ln1"))?;
            let ff = self.feed_forward(x, &format!("{prefix}.ff"))?;
            x = self.layer_norm(x.add(self.drop(ff)?)?, &format!("{prefix}.ln2"))?;
        }
        Ok(x)
    }

    /// Run an LSTM over the rows of `inputs`, returning all hidden states
    /// stacked `[L × H]` plus the final `(h, c)`.
    fn lstm_over(
        &self,
        inputs: Var<'t>,
        weight: &str,
        bias: &str,
    ) -> Result<(Var<'t>, Var<'t>, Var<'t>)> {
        let len = inputs.shape()[0];
        let hdim = self.cfg.hidden_dim;
        let w = self.p(weight)?;
        let b = self.p(bias)?;
        let mut h = self.tape.constant(&Tensor::zeros(vec![hdim]));
        let mut c = self.tape.constant(&Tensor::zeros(vec![hdim]));
        let mut states = Vec::with_capacity(len);
        for t in 0..len {
            let x = inputs.row(t)?;
            let (nh, nc) = lstm_cell(x, h, c, w, b)?;
            h = nh;
            c = nc;
            states.push(h);
        }
        Ok((stack_rows(&states)?, h, c))
    }

    /// Encode a document given its base-vocabulary ids.
    pub fn encode_doc(&self, doc_base_ids: &[u32]) -> Result<EncodedVars<'t>> {
        if doc_base_ids.is_empty() {
            return Err(Error::EmptySequence("cannot encode an empty document".into()));
        }
        let len = doc_base_ids.len();
        let emb = self.drop(self.embed(doc_base_ids)?)?;
        let (ctx, init_state) = match self.cfg.architecture {
            Architecture::Seq2SeqAttention | Architecture::Pgn => {
                let (states, h, c) = self.lstm_over(emb, "encoder_lstm.weight", "encoder_lstm.bias")?;
                (states, Some((h, c)))
            }
            Architecture::Transf2Transf => {
                let x = self.add_positional(emb, len)?;
                (self.encoder_stack(x)?, None)
            }
            Architecture::TPgn => {
                let x = self.add_positional(emb, len)?;
                let ctx = self.encoder_stack(x)?;
                let (_, h, c) = self.lstm_over(ctx, "encoder_lstm.weight", "encoder_lstm.bias")?;
                (ctx, Some((h, c)))
            }
        };
        let proj_keys = if self.cfg.architecture.decoder_is_recurrent() {
            Some(ctx.matmul(self.p("attention.w_keys")?)?)
        } else {
            None
        };
        Ok(EncodedVars {
            ctx,
            init_state,
            proj_keys,
            doc_len: len,
        })
    }

    /// Additive attention of decoder state `s` over the encoded document.
    fn additive_attention(
        &self,
        enc: &EncodedVars<'t>,
        s: Var<'t>,
    ) -> Result<(Var<'t>, Var<'t>)> {
        let len = enc.doc_len;
        let adim = self.cfg.hidden_dim;
        let proj_keys = enc.proj_keys.expect("recurrent decoder has projected keys");
        let s_proj = linear(s, self.p("attention.w_state")?, self.p("attention.bias")?)?;
        let ones = self
            .tape
            .constant(&Tensor::matrix(len, 1, vec![1.0; len]).expect("ones"));
        let s_rows = ones.matmul(s_proj.reshape(vec![1, adim])?)?;
        let scores = proj_keys
            .add(s_rows)?
            .tanh()
            .matmul(self.p("attention.v")?.reshape(vec![adim, 1])?)?
            .reshape(vec![len])?;
        let weights = scores.softmax()?;
        let context = weights
            .reshape(vec![1, len])?
            .matmul(enc.ctx)?
            .reshape(vec![enc.ctx.shape()[1]])?;
        Ok((context, weights))
    }

    /// One LSTM decoder step from embedded input `x_emb` and state `(h, c)`.
    fn recurrent_step(
        &self,
        enc: &EncodedVars<'t>,
        x_emb: Var<'t>,
        h: Var<'t>,
        c: Var<'t>,
        scatter: &ScatterSpec,
    ) -> Result<(StepVars<'t>, Var<'t>, Var<'t>)> {
        let w = self.p("decoder_lstm.weight")?;
        let b = self.p("decoder_lstm.bias")?;
        let (nh, nc) = lstm_cell(x_emb, h, c, w, b)?;
        let (context, weights) = self.additive_attention(enc, nh)?;
        let features = self.drop(concat(&[nh, context])?)?;
        let hidden = linear(features, self.p("output.w1")?, self.p("output.b1")?)?;
        let logits = linear(hidden, self.p("output.w2")?, self.p("output.b2")?)?;
        let p_vocab = logits.softmax()?;
        let step = if self.cfg.architecture.uses_copy() {
            let gate_in = concat(&[context, nh, x_emb])?;
            let p_gen = linear(gate_in, self.p("copy_gate.w")?, self.p("copy_gate.b")?)?
                .sigmoid();
            let gen_part = p_vocab
                .scale_by(p_gen)?
                .pad_zeros(scatter.ext_size)?;
            let copy_part = weights
                .scale_by(p_gen.rsub_const(1.0))?
                .scatter_add(&scatter.ext_ids, scatter.ext_size)?;
            StepVars {
                final_dist: gen_part.add(copy_part)?,
                attention: weights,
                p_gen: Some(p_gen),
            }
        } else {
            StepVars {
                final_dist: p_vocab.pad_zeros(scatter.ext_size)?,
                attention: weights,
                p_gen: None,
            }
        };
        Ok((step, nh, nc))
    }

    /// Causally masked transformer decoder over the whole input prefix;
    /// one [`StepVars`] per input position.
    fn transformer_decoder(
        &self,
        enc: &EncodedVars<'t>,
        inputs: &[u32],
        scatter: &ScatterSpec,
    ) -> Result<Vec<StepVars<'t>>> {
        let t_len = inputs.len();
        let l_len = enc.doc_len;
        let causal: Vec<bool> = (0..t_len * t_len)
            .map(|i| i % t_len <= i / t_len)
            .collect();
        let emb = self.drop(self.embed(inputs)?)?;
        let mut x = self.add_positional(emb, t_len)?;
        let mut cross_attn = None;
        for i in 0..self.cfg.n_transformer_layers {
            let prefix = format!("dec.layer{i}");
            let (a, _) = self.mha(x, x, &format!("{prefix}.self_attn"), Some(&causal))?;
            x = self.layer_norm(x.add(self.drop(a)?)?, &format!("{prefix}.ln1"))?;
            let (cr, attn) = self.mha(x, enc.ctx, &format!("{prefix}.cross_attn"), None)?;
            x = self.layer_norm(x.add(self.drop(cr)?)?, &format!("{prefix}.ln_cross"))?;
            let ff = self.feed_forward(x, &format!("{prefix}.ff"))?;
            x = self.layer_norm(x.add(self.drop(ff)?)?, &format!("{prefix}.ln2"))?;
            cross_attn = Some(attn);
        }
        let logits = linear_rows(x, self.p("output.w")?, self.p("output.b")?)?;
        let dists = logits.softmax_rows(None)?;
        let attn = cross_attn.expect("at least one decoder layer");
        debug_assert_eq!(attn.shape(), vec![t_len, l_len]);
        (0..t_len)
            .map(|t| {
                Ok(StepVars {
                    final_dist: dists.row(t)?.pad_zeros(scatter.ext_size)?,
                    attention: attn.row(t)?,
                    p_gen: None,
                })
            })
            .collect()
    }

    /// Teacher-forced decode: `inputs[0]` is `<SOS>`, followed by the
    /// ground-truth query prefix in base ids. Returns one step per input.
    pub fn teacher_forced(
        &self,
        enc: &EncodedVars<'t>,
        inputs: &[u32],
        scatter: &ScatterSpec,
    ) -> Result<Vec<StepVars<'t>>> {
        if inputs.is_empty() {
            return Err(Error::EmptySequence("decoder needs at least one input".into()));
        }
        if self.cfg.architecture.decoder_is_recurrent() {
            let (mut h, mut c) = enc.init_state.expect("recurrent decoder init state");
            let emb = self.embed(inputs)?;
            let mut steps = Vec::with_capacity(inputs.len());
            for t in 0..inputs.len() {
                let x = emb.row(t)?;
                let (step, nh, nc) = self.recurrent_step(enc, x, h, c, scatter)?;
                h = nh;
                c = nc;
                steps.push(step);
            }
            Ok(steps)
        } else {
            self.transformer_decoder(enc, inputs, scatter)
        }
    }

    /// A single incremental recurrent step (used by `decode_step`).
    pub fn one_recurrent_step(
        &self,
        enc: &EncodedVars<'t>,
        prev_id: u32,
        h: Var<'t>,
        c: Var<'t>,
        scatter: &ScatterSpec,
    ) -> Result<(StepVars<'t>, Var<'t>, Var<'t>)> {
        let emb = self.embed(&[prev_id])?.reshape(vec![self.cfg.embedding_dim])?;
        self.recurrent_step(enc, emb, h, c, scatter)
    }
}

/// Build the tape-independent scatter description for a document.
pub fn scatter_spec(ext_ids: &[u32], ext_size: usize) -> ScatterSpec {
    ScatterSpec {
        ext_ids: ext_ids.iter().map(|&i| i as usize).collect(),
        ext_size,
    }
}
