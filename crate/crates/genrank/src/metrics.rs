//! Ranking metrics (MRR, NDCG@10, Recall) and the two-sided paired t-test.

use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::score::RankedList;
use crate::text::Qrels;

pub const DEFAULT_MRR_CUTOFF: usize = 10;
pub const NDCG_CUTOFF: usize = 10;

/// Reciprocal rank of the first document with grade ≥ 1 within `cutoff`;
/// 0 when none.
pub fn mrr(ranked: &RankedList, qrels: &Qrels, cutoff: usize) -> f64 {
    for (i, entry) in ranked.entries.iter().take(cutoff).enumerate() {
        if qrels.grade(&ranked.query_id, &entry.doc_id).unwrap_or(0) >= 1 {
            return 1.0 / (i + 1) as f64;
        }
    }
    0.0
}

fn dcg(grades: impl Iterator<Item = u32>) -> f64 {
    grades
        .enumerate()
        .map(|(i, g)| g as f64 / ((i + 2) as f64).log2())
        .sum()
}

/// NDCG@10 with linear gains: DCG over the top 10 divided by the ideal DCG
/// from all judged grades of the query. All-zero grades give 0.
pub fn ndcg_at_10(ranked: &RankedList, qrels: &Qrels) -> f64 {
    let actual = dcg(ranked
        .entries
        .iter()
        .take(NDCG_CUTOFF)
        .map(|e| qrels.grade(&ranked.query_id, &e.doc_id).unwrap_or(0)));
    let mut grades: Vec<u32> = qrels
        .judged(&ranked.query_id)
        .map(|m| m.values().copied().collect())
        .unwrap_or_default();
    grades.sort_unstable_by(|a, b| b.cmp(a));
    let ideal = dcg(grades.into_iter().take(NDCG_CUTOFF));
    if ideal == 0.0 {
        0.0
    } else {
        actual / ideal
    }
}

/// Fraction of the query's relevant documents (grade ≥ 1) found in the top
/// `k`; `None` when the query has no relevant documents.
pub fn recall(ranked: &RankedList, qrels: &Qrels, k: usize) -> Option<f64> {
    let total = qrels.relevant_count(&ranked.query_id);
    if total == 0 {
        return None;
    }
    let hit = ranked
        .entries
        .iter()
        .take(k)
        .filter(|e| qrels.grade(&ranked.query_id, &e.doc_id).unwrap_or(0) >= 1)
        .count();
    Some(hit as f64 / total as f64)
}

/// Per-query metric values plus their means.
#[derive(Clone, Debug, Default)]
pub struct MetricReport {
    /// (query id, mrr, ndcg@10, recall)
    pub per_query: Vec<(String, f64, f64, f64)>,
    pub mean_mrr: f64,
    pub mean_ndcg: f64,
    pub mean_recall: f64,
    /// Queries skipped because qrels had no (relevant) judgments for them.
    pub skipped: usize,
}

impl MetricReport {
    pub fn query_count(&self) -> usize {
        self.per_query.len()
    }
}

/// Evaluate ranked lists against qrels. Queries absent from the qrels (or
/// with zero relevant documents) are excluded and counted in `skipped`.
pub fn evaluate_lists(
    lists: &[RankedList],
    qrels: &Qrels,
    mrr_cutoff: usize,
    recall_depth: Option<usize>,
) -> MetricReport {
    let mut report = MetricReport::default();
    for ranked in lists {
        if !qrels.has_query(&ranked.query_id) {
            report.skipped += 1;
            continue;
        }
        let depth = recall_depth.unwrap_or(ranked.entries.len());
        let Some(rec) = recall(ranked, qrels, depth) else {
            report.skipped += 1;
            continue;
        };
        let m = mrr(ranked, qrels, mrr_cutoff);
        let n = ndcg_at_10(ranked, qrels);
        report.per_query.push((ranked.query_id.clone(), m, n, rec));
    }
    let count = report.per_query.len().max(1) as f64;
    report.mean_mrr = report.per_query.iter().map(|q| q.1).sum::<f64>() / count;
    report.mean_ndcg = report.per_query.iter().map(|q| q.2).sum::<f64>() / count;
    report.mean_recall = report.per_query.iter().map(|q| q.3).sum::<f64>() / count;
    report
}

pub fn write_metric_report(path: &Path, report: &MetricReport) -> Result<()> {
    let mut out = Vec::new();
    writeln!(out, "metric\tmean\tn_queries")?;
    let n = report.query_count();
    writeln!(out, "mrr\t{:.6}\t{n}", report.mean_mrr)?;
    writeln!(out, "ndcg@10\t{:.6}\t{n}", report.mean_ndcg)?;
    writeln!(out, "recall\t{:.6}\t{n}", report.mean_recall)?;
    crate::cli::write_atomic(path, &out)
}

pub fn write_per_query_csv(path: &Path, report: &MetricReport) -> Result<()> {
    let mut out = Vec::new();
    writeln!(out, "query_id,mrr,ndcg10,recall")?;
    for (qid, m, n, r) in &report.per_query {
        writeln!(out, "{qid},{m:.6},{n:.6},{r:.6}")?;
    }
    crate::cli::write_atomic(path, &out)
}

// ── Student's t ─────────────────────────────────────────────────────────

/// Regularized incomplete beta I_x(a, b) by Lentz's continued fraction.
fn betai(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    // ln B(a,b) via ln Γ.
    let lbeta = ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b);
    let front = (a * x.ln() + b * (1.0 - x).ln() - lbeta).exp();
    // Continued fraction converges fastest for x < (a+1)/(a+b+2).
    if x < (a + 1.0) / (a + b + 2.0) {
        front * betacf(a, b, x) / a
    } else {
        1.0 - (front * betacf(b, a, 1.0 - x) / b)
    }
}

fn betacf(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 300;
    const EPS: f64 = 1e-14;
    const TINY: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Lanczos approximation of ln Γ(x), x > 0.
fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 6] = [
        76.18009172947146,
        -86.50532032941677,
        24.01409824083091,
        -1.231739572450155,
        0.1208650973866179e-2,
        -0.5395239384953e-5,
    ];
    let mut y = x;
    let tmp = x + 5.5;
    let tmp = tmp - (x + 0.5) * tmp.ln();
    let mut ser = 1.000000000190015;
    for c in COEF {
        y += 1.0;
        ser += c / y;
    }
    -tmp + (2.5066282746310005 * ser / x).ln()
}

/// Two-sided p-value for Student's t with `dof` degrees of freedom:
/// p = I_{ν/(ν+t²)}(ν/2, 1/2).
pub fn student_t_two_sided_p(t: f64, dof: f64) -> Result<f64> {
    if dof < 1.0 {
        return Err(Error::Contract(format!(
            "t-test needs at least 1 degree of freedom, got {dof}"
        )));
    }
    Ok(betai(dof / 2.0, 0.5, dof / (dof + t * t)))
}

/// Two-sided paired t-test over aligned per-query values. Sample standard
/// deviation; errors when the differences have zero variance.
pub fn paired_t_test(per_query_a: &[f64], per_query_b: &[f64]) -> Result<(f64, f64)> {
    if per_query_a.len() != per_query_b.len() || per_query_a.len() < 2 {
        return Err(Error::Contract(format!(
            "paired t-test needs two aligned lists of ≥ 2 values, got {} and {}",
            per_query_a.len(),
            per_query_b.len()
        )));
    }
    let n = per_query_a.len() as f64;
    let diffs: Vec<f64> = per_query_a
        .iter()
        .zip(per_query_b)
        .map(|(&a, &b)| a - b)
        .collect();
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1.0);
    if var == 0.0 {
        return Err(Error::Numeric(
            "degenerate paired t-test: differences have zero variance".into(),
        ));
    }
    let t = mean / (var / n).sqrt();
    let p = student_t_two_sided_p(t, n - 1.0)?;
    Ok((t, p))
}
