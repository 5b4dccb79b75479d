//! Trials × folds evaluation of the cut-off methods.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cutoff::{
    f1_at, greedy_cutoff, oracle_cutoff, train_predictor, CutoffInstance, FeatureSet,
    PredictorConfig,
};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Method {
    Greedy,
    Oracle,
    Rel,
    RelUncertainty,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Greedy, Method::Oracle, Method::Rel, Method::RelUncertainty];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Greedy => "greedy",
            Method::Oracle => "oracle",
            Method::Rel => "rel",
            Method::RelUncertainty => "rel+uncertainty",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug)]
pub struct EvalOptions {
    pub folds: usize,
    pub trials: usize,
    pub seed: u64,
    pub predictor_epochs: usize,
    pub predictor_lr: f64,
}

impl EvalOptions {
    pub fn new(seed: u64) -> Self {
        EvalOptions {
            folds: 5,
            trials: 50,
            seed,
            predictor_epochs: 40,
            predictor_lr: 0.01,
        }
    }
}

/// Mean test F1 of one (trial, fold) for one method.
#[derive(Clone, Debug)]
pub struct FoldResult {
    pub trial: usize,
    pub fold: usize,
    pub method: Method,
    pub mean_f1: f64,
}

#[derive(Clone, Debug)]
pub struct CutoffReport {
    pub mean_f1: BTreeMap<Method, f64>,
    pub per_fold: Vec<FoldResult>,
    /// Queries dropped because they had no relevant document.
    pub excluded_queries: usize,
}

impl CutoffReport {
    pub fn pct_of_oracle(&self, method: Method) -> f64 {
        let oracle = self.mean_f1[&Method::Oracle];
        if oracle == 0.0 {
            0.0
        } else {
            100.0 * self.mean_f1[&method] / oracle
        }
    }

    /// Aligned text table, one row per method.
    pub fn table(&self) -> String {
        let mut out = String::from("method           mean_f1   pct_of_oracle\n");
        for m in Method::ALL {
            out.push_str(&format!(
                "{:<16} {:>7.4}   {:>6.1}\n",
                m.name(),
                self.mean_f1[&m],
                self.pct_of_oracle(m)
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        writeln!(out, "method,mean_f1,pct_of_oracle")?;
        for m in Method::ALL {
            writeln!(
                out,
                "{},{:.6},{:.2}",
                m.name(),
                self.mean_f1[&m],
                self.pct_of_oracle(m)
            )?;
        }
        crate::cli::write_atomic(path, &out)
    }
}

fn mean_test_f1_at_global_k(test: &[&CutoffInstance], k: usize) -> Result<f64> {
    let mut sum = 0.0;
    for inst in test {
        sum += f1_at(&inst.labels, k.min(inst.len()))?;
    }
    Ok(sum / test.len() as f64)
}

/// Shuffled `folds`-fold cross validation repeated over `trials`, reporting
/// mean F1 for Greedy, Oracle, and the two learned feature sets. Instances
/// with no relevant document are excluded up front (F1 carries no signal
/// there) and counted.
pub fn evaluate(instances: &[CutoffInstance], opts: &EvalOptions) -> Result<CutoffReport> {
    let kept: Vec<&CutoffInstance> = instances.iter().filter(|i| i.relevant_count() > 0).collect();
    let excluded_queries = instances.len() - kept.len();
    if opts.folds < 2 {
        return Err(Error::Contract(format!("need ≥ 2 folds, got {}", opts.folds)));
    }
    if kept.len() < opts.folds {
        return Err(Error::Contract(format!(
            "{} usable instances cannot fill {} folds",
            kept.len(),
            opts.folds
        )));
    }
    let mut per_fold = Vec::new();
    for trial in 0..opts.trials {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(trial as u64));
        let mut order: Vec<usize> = (0..kept.len()).collect();
        order.shuffle(&mut rng);
        // Contiguous folds over the shuffled order, sizes within one.
        let base = kept.len() / opts.folds;
        let extra = kept.len() % opts.folds;
        let mut start = 0;
        for fold in 0..opts.folds {
            let size = base + usize::from(fold < extra);
            let test_idx = &order[start..start + size];
            start += size;
            let test: Vec<&CutoffInstance> = test_idx.iter().map(|&i| kept[i]).collect();
            let train: Vec<CutoffInstance> = order
                .iter()
                .filter(|i| !test_idx.contains(i))
                .map(|&i| kept[i].clone())
                .collect();

            let greedy_k = greedy_cutoff(&train)?;
            per_fold.push(FoldResult {
                trial,
                fold,
                method: Method::Greedy,
                mean_f1: mean_test_f1_at_global_k(&test, greedy_k)?,
            });

            let mut oracle_sum = 0.0;
            for inst in &test {
                oracle_sum += oracle_cutoff(&inst.labels)?.1;
            }
            per_fold.push(FoldResult {
                trial,
                fold,
                method: Method::Oracle,
                mean_f1: oracle_sum / test.len() as f64,
            });

            for (method, feature_set) in [
                (Method::Rel, FeatureSet::Rel),
                (Method::RelUncertainty, FeatureSet::RelUncertainty),
            ] {
                let mut cfg = PredictorConfig::new(
                    opts.seed
                        .wrapping_mul(31)
                        .wrapping_add((trial * opts.folds + fold) as u64),
                );
                cfg.epochs = opts.predictor_epochs;
                cfg.lr = opts.predictor_lr;
                let predictor = train_predictor(&train, feature_set, &cfg)?;
                let mut sum = 0.0;
                for inst in &test {
                    sum += f1_at(&inst.labels, predictor.predict(inst)?)?;
                }
                per_fold.push(FoldResult {
                    trial,
                    fold,
                    method,
                    mean_f1: sum / test.len() as f64,
                });
            }
        }
    }
    let mut mean_f1 = BTreeMap::new();
    for m in Method::ALL {
        let scores: Vec<f64> = per_fold
            .iter()
            .filter(|f| f.method == m)
            .map(|f| f.mean_f1)
            .collect();
        mean_f1.insert(m, scores.iter().sum::<f64>() / scores.len() as f64);
    }
    Ok(CutoffReport {
        mean_f1,
        per_fold,
        excluded_queries,
    })
}
