//! Flat key = value experiment configuration with flag overrides.
//!
//! Precedence: command-line `--set key=value` > config file > built-in
//! default. Every command validates the fields it needs (including that
//! referenced input files exist) before writing anything.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::model::Architecture;
use crate::train::LossKind;

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    // Input paths.
    pub collection: Option<PathBuf>,
    pub queries: Option<PathBuf>,
    pub eval_queries: Option<PathBuf>,
    pub triples: Option<PathBuf>,
    pub qrels: Option<PathBuf>,
    pub run: Option<PathBuf>,
    pub baseline_run: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub uncertainty_csv: Option<PathBuf>,

    // Experiment layout.
    pub out: PathBuf,
    pub tag: String,

    // Model.
    pub architecture: Architecture,
    pub embedding_dim: usize,
    pub hidden_dim: usize,
    pub n_transformer_layers: usize,
    pub n_heads: usize,
    pub feedforward_dim: usize,
    pub dropout: f64,

    // Training.
    pub loss: LossKind,
    pub epochs: usize,
    /// 0 selects the architecture default (0.001 LSTM / 0.0001 transformer).
    pub lr: f64,
    pub batch_size: usize,
    pub clip_norm: f64,
    pub min_frequency: u32,

    // Evaluation.
    pub mrr_cutoff: usize,
    /// 0 means the full re-ranked list.
    pub recall_depth: usize,
    pub nucleus_p: f64,
    pub q_smoothing_mu: f64,

    // Cut-off experiment.
    pub cutoff_folds: usize,
    pub cutoff_trials: usize,
    pub predictor_epochs: usize,
    pub predictor_lr: f64,

    // Generation.
    pub max_len: usize,

    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            collection: None,
            queries: None,
            eval_queries: None,
            triples: None,
            qrels: None,
            run: None,
            baseline_run: None,
            vocab: None,
            checkpoint: None,
            uncertainty_csv: None,
            out: PathBuf::from("out"),
            tag: "default".into(),
            architecture: Architecture::TPgn,
            embedding_dim: 64,
            hidden_dim: 64,
            n_transformer_layers: 1,
            n_heads: 2,
            feedforward_dim: 128,
            dropout: 0.0,
            loss: LossKind::Nll,
            epochs: 20,
            lr: 0.0,
            batch_size: 32,
            clip_norm: 2.0,
            min_frequency: 5,
            mrr_cutoff: 10,
            recall_depth: 0,
            nucleus_p: 0.95,
            q_smoothing_mu: 1000.0,
            cutoff_folds: 5,
            cutoff_trials: 50,
            predictor_epochs: 40,
            predictor_lr: 0.01,
            max_len: 30,
            seed: 42,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value {value:?} for {key}")))
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "{}:{}: expected `key = value`, got {line:?}",
                    path.display(),
                    i + 1
                ))
            })?;
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    /// Apply one `key=value` override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let path = |v: &str| Some(PathBuf::from(v));
        match key {
            "collection" => self.collection = path(value),
            "queries" => self.queries = path(value),
            "eval_queries" => self.eval_queries = path(value),
            "triples" => self.triples = path(value),
            "qrels" => self.qrels = path(value),
            "run" => self.run = path(value),
            "baseline_run" => self.baseline_run = path(value),
            "vocab" => self.vocab = path(value),
            "checkpoint" => self.checkpoint = path(value),
            "uncertainty_csv" => self.uncertainty_csv = path(value),
            "out" => self.out = PathBuf::from(value),
            "tag" => self.tag = value.to_string(),
            "architecture" => self.architecture = value.parse()?,
            "embedding_dim" => self.embedding_dim = parse_num(key, value)?,
            "hidden_dim" => self.hidden_dim = parse_num(key, value)?,
            "n_transformer_layers" => self.n_transformer_layers = parse_num(key, value)?,
            "n_heads" => self.n_heads = parse_num(key, value)?,
            "feedforward_dim" => self.feedforward_dim = parse_num(key, value)?,
            "dropout" => self.dropout = parse_num(key, value)?,
            "loss" => self.loss = LossKind::parse(value)?,
            "epochs" => self.epochs = parse_num(key, value)?,
            "lr" => self.lr = parse_num(key, value)?,
            "batch_size" => self.batch_size = parse_num(key, value)?,
            "clip_norm" => self.clip_norm = parse_num(key, value)?,
            "min_frequency" => self.min_frequency = parse_num(key, value)?,
            "mrr_cutoff" => self.mrr_cutoff = parse_num(key, value)?,
            "recall_depth" => self.recall_depth = parse_num(key, value)?,
            "nucleus_p" => self.nucleus_p = parse_num(key, value)?,
            "ql_smoothing_mu" => self.q_smoothing_mu = parse_num(key, value)?,
            "cutoff_folds" => self.cutoff_folds = parse_num(key, value)?,
            "cutoff_trials" => self.cutoff_trials = parse_num(key, value)?,
            "predictor_epochs" => self.predictor_epochs = parse_num(key, value)?,
            "predictor_lr" => self.predictor_lr = parse_num(key, value)?,
            "max_len" => self.max_len = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            other => {
                return Err(Error::Config(format!("unknown config key {other:?}")));
            }
        }
        Ok(())
    }

    // Experiment directory layout: out/<tag>/{checkpoints, runs, reports, csv}.

    pub fn exp_dir(&self) -> PathBuf {
        self.out.join(&self.tag)
    }

    pub fn checkpoints_dir(&self) -> PathBuf {
        self.exp_dir().join("checkpoints")
    }

    pub fn runs_dir(&self) -> PathBuf {
        self.exp_dir().join("runs")
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.exp_dir().join("reports")
    }

    pub fn csv_dir(&self) -> PathBuf {
        self.exp_dir().join("csv")
    }

    pub fn vocab_path(&self) -> PathBuf {
        self.vocab
            .clone()
            .unwrap_or_else(|| self.exp_dir().join("vocab.txt"))
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint
            .clone()
            .unwrap_or_else(|| self.checkpoints_dir().join("final.ckpt"))
    }

    pub fn uncertainty_csv_path(&self) -> PathBuf {
        self.uncertainty_csv
            .clone()
            .unwrap_or_else(|| self.csv_dir().join("relevance_uncertainty.csv"))
    }

    pub fn effective_lr(&self) -> f64 {
        if self.lr > 0.0 {
            self.lr
        } else {
            crate::train::default_lr(self.architecture)
        }
    }

    pub fn recall_depth_option(&self) -> Option<usize> {
        if self.recall_depth == 0 {
            None
        } else {
            Some(self.recall_depth)
        }
    }

    pub fn model_config(&self, vocab_size: usize) -> crate::model::ModelConfig {
        crate::model::ModelConfig {
            architecture: self.architecture,
            embedding_dim: self.embedding_dim,
            hidden_dim: self.hidden_dim,
            n_transformer_layers: self.n_transformer_layers,
            n_heads: self.n_heads,
            feedforward_dim: self.feedforward_dim,
            vocab_size,
            dropout: self.dropout,
            seed: self.seed,
        }
    }
}

/// A required input path: present in the config and existing on disk.
pub fn require(path: &Option<PathBuf>, key: &str) -> Result<PathBuf> {
    let p = path
        .clone()
        .ok_or_else(|| Error::Config(format!("missing required config key {key}")))?;
    if !p.exists() {
        return Err(Error::Config(format!(
            "{key} path {} does not exist",
            p.display()
        )));
    }
    Ok(p)
}

/// Like [`require`] but for derived paths.
pub fn require_existing(p: PathBuf, what: &str) -> Result<PathBuf> {
    if !p.exists() {
        return Err(Error::Config(format!(
            "{what} {} does not exist",
            p.display()
        )));
    }
    Ok(p)
}
