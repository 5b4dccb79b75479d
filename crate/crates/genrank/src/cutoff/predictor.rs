//! Learned cut-off predictor: a one-layer self-attention scorer over
//! per-rank features with positional encoding, trained with listwise
//! cross-entropy against the oracle cut-off position.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{adam_step, linear_rows, AdamConfig, AdamState, Tape, Tensor, Var};
use crate::cutoff::{oracle_cutoff, CutoffInstance, FeatureSet};
use crate::error::{Error, Result};
use crate::model::{argmax_lowest, positional_encoding, ParamBuilder, ParamSet};

#[derive(Clone, Debug)]
pub struct PredictorConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl PredictorConfig {
    pub fn new(seed: u64) -> Self {
        PredictorConfig {
            d_model: 32,
            n_heads: 2,
            epochs: 40,
            lr: 0.01,
            batch_size: 16,
            seed,
        }
    }
}

pub struct CutoffPredictor {
    feature_set: FeatureSet,
    d_model: usize,
    n_heads: usize,
    params: ParamSet,
}

/// Per-list z-normalization of each feature channel; constant channels
/// become zeros.
fn z_normalize(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = rows.len();
    let width = rows[0].len();
    let mut out = vec![vec![0.0; width]; n];
    for c in 0..width {
        let mean = rows.iter().map(|r| r[c]).sum::<f64>() / n as f64;
        let var = rows.iter().map(|r| (r[c] - mean) * (r[c] - mean)).sum::<f64>() / n as f64;
        let sd = var.sqrt();
        if sd > 1e-12 {
            for (o, r) in out.iter_mut().zip(rows) {
                o[c] = (r[c] - mean) / sd;
            }
        }
    }
    out
}

fn build_params(feature_dim: usize, d_model: usize, seed: u64) -> ParamSet {
    let mut b = ParamBuilder::new(seed);
    b.weight("proj.w", &[feature_dim, d_model]);
    b.zeros("proj.b", &[d_model]);
    for name in ["wq", "wk", "wv", "wo"] {
        b.weight(&format!("attn.{name}"), &[d_model, d_model]);
        b.zeros(&format!("attn.b{}", &name[1..]), &[d_model]);
    }
    b.ones("ln.gamma", &[d_model]);
    b.zeros("ln.beta", &[d_model]);
    b.weight("score.w", &[d_model, 1]);
    b.zeros("score.b", &[1]);
    b.finish()
}

impl CutoffPredictor {
    pub fn feature_set(&self) -> FeatureSet {
        self.feature_set
    }

    /// Position scores (softmax over list positions) for one instance,
    /// using already-bound parameters.
    fn forward_with<'t>(
        &self,
        tape: &'t Tape,
        bound: &crate::model::BoundParams<'_, 't>,
        instance: &CutoffInstance,
    ) -> Result<Var<'t>> {
        let rows = z_normalize(&self.feature_set.project(&instance.features));
        let n = rows.len();
        let f = self.feature_set.width();
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        let x = tape.constant(&Tensor::new(vec![n, f], flat)?);
        let p = |name: &str| bound.var(name);

        let projected = linear_rows(x, p("proj.w")?, p("proj.b")?)?;
        let pe = tape.constant(&positional_encoding(n, self.d_model));
        let h = projected.add(pe)?;

        let dh = self.d_model / self.n_heads;
        let q = linear_rows(h, p("attn.wq")?, p("attn.bq")?)?;
        let k = linear_rows(h, p("attn.wk")?, p("attn.bk")?)?;
        let v = linear_rows(h, p("attn.wv")?, p("attn.bv")?)?;
        let mut heads = Vec::with_capacity(self.n_heads);
        for i in 0..self.n_heads {
            let (a, b) = (i * dh, (i + 1) * dh);
            let attn = q
                .slice_cols(a, b)?
                .matmul(k.slice_cols(a, b)?.transpose())?
                .scale(1.0 / (dh as f64).sqrt())
                .softmax_rows(None)?;
            heads.push(attn.matmul(v.slice_cols(a, b)?)?);
        }
        let merged = crate::autodiff::concat_cols(&heads)?;
        let attended = linear_rows(merged, p("attn.wo")?, p("attn.bo")?)?;
        let normed = h.add(attended)?.layer_norm(p("ln.gamma")?, p("ln.beta")?, 1e-5)?;
        let scores = linear_rows(normed, p("score.w")?, p("score.b")?)?.reshape(vec![n])?;
        scores.softmax()
    }

    /// Predicted cutoff, in 1..=len (argmax position, ties to the lowest).
    pub fn predict(&self, instance: &CutoffInstance) -> Result<usize> {
        let tape = Tape::inference();
        let bound = self.params.bind(&tape);
        let probs = self.forward_with(&tape, &bound, instance)?.value();
        Ok(argmax_lowest(probs.data()) + 1)
    }
}

/// Train a predictor with listwise cross-entropy against each list's oracle
/// cutoff (earliest position on ties). Deterministic for a fixed config.
pub fn train_predictor(
    instances: &[CutoffInstance],
    feature_set: FeatureSet,
    cfg: &PredictorConfig,
) -> Result<CutoffPredictor> {
    if instances.len() < 2 {
        return Err(Error::Contract(format!(
            "predictor training needs at least 2 instances, got {}",
            instances.len()
        )));
    }
    if cfg.d_model % cfg.n_heads != 0 {
        return Err(Error::Config(format!(
            "d_model {} not divisible by n_heads {}",
            cfg.d_model, cfg.n_heads
        )));
    }
    let mut predictor = CutoffPredictor {
        feature_set,
        d_model: cfg.d_model,
        n_heads: cfg.n_heads,
        params: build_params(feature_set.width(), cfg.d_model, cfg.seed),
    };
    let targets: Vec<usize> = instances
        .iter()
        .map(|inst| oracle_cutoff(&inst.labels).map(|(k, _)| k - 1))
        .collect::<Result<_>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::for_params(predictor.params.tensors());
    let adam_cfg = AdamConfig::with_lr(cfg.lr);
    let mut order: Vec<usize> = (0..instances.len()).collect();
    for _epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let mut grads: Vec<Tensor> = predictor
                .params
                .tensors()
                .iter()
                .map(|t| Tensor::zeros(t.shape().to_vec()))
                .collect();
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let tape = Tape::new();
                let bound = predictor.params.bind(&tape);
                let probs = predictor.forward_with(&tape, &bound, &instances[i])?;
                let loss = probs.select(targets[i])?.ln().neg().scale(scale);
                tape.backward(loss)?;
                for (g, var) in grads.iter_mut().zip(bound.vars()) {
                    for (a, b) in g.data_mut().iter_mut().zip(var.grad().data()) {
                        *a += b;
                    }
                }
            }
            adam_step(predictor.params.tensors_mut(), &grads, &mut adam, &adam_cfg)?;
        }
    }
    Ok(predictor)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn planted_instance(n: usize, k_star: usize, qid: usize) -> CutoffInstance {
        // Uncertainty channel 4 dips exactly at the oracle position.
        let features: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let dip = if i + 1 == k_star { -2.0 } else { 0.0 };
                vec![-(i as f64) * 0.1, 0.5, 0.2, 0.8, 1.5 + dip]
            })
            .collect();
        let labels: Vec<bool> = (0..n).map(|i| i < k_star).collect();
        CutoffInstance::new(format!("q{qid}"), features, labels).unwrap()
    }

    #[test]
    fn z_normalize_zeroes_constant_channels() {
        let rows = vec![vec![5.0, 1.0], vec![5.0, 3.0]];
        let z = z_normalize(&rows);
        assert_eq!(z[0][0], 0.0);
        assert_eq!(z[1][0], 0.0);
        assert!((z[0][1] + 1.0).abs() < 1e-12);
        assert!((z[1][1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn untrained_predictor_stays_in_range() {
        let instances: Vec<CutoffInstance> =
            (0..4).map(|i| planted_instance(10, 3 + i % 4, i)).collect();
        let predictor = CutoffPredictor {
            feature_set: FeatureSet::RelUncertainty,
            d_model: 16,
            n_heads: 2,
            params: build_params(5, 16, 1),
        };
        for inst in &instances {
            let k = predictor.predict(inst).unwrap();
            assert!(k >= 1 && k <= inst.len());
        }
    }

    #[test]
    fn learns_separable_uncertainty_signal() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let train: Vec<CutoffInstance> = (0..40)
            .map(|i| planted_instance(12, rng.gen_range(2..=9), i))
            .collect();
        let test: Vec<CutoffInstance> = (0..12)
            .map(|i| planted_instance(12, rng.gen_range(2..=9), 100 + i))
            .collect();
        let mut cfg = PredictorConfig::new(7);
        cfg.epochs = 60;
        let predictor = train_predictor(&train, FeatureSet::RelUncertainty, &cfg).unwrap();
        let hits = test
            .iter()
            .filter(|inst| predictor.predict(inst).unwrap() == oracle_cutoff(&inst.labels).unwrap().0)
            .count();
        assert!(hits >= 9, "only {hits}/12 separable lists solved");
    }

    #[test]
    fn training_is_deterministic() {
        let train: Vec<CutoffInstance> = (0..8).map(|i| planted_instance(8, 2 + i % 5, i)).collect();
        let cfg = PredictorConfig::new(3);
        let a = train_predictor(&train, FeatureSet::Rel, &cfg).unwrap();
        let b = train_predictor(&train, FeatureSet::Rel, &cfg).unwrap();
        for (x, y) in a.params.tensors().iter().zip(b.params.tensors()) {
            assert_eq!(x.data(), y.data());
        }
    }
}
