//! Nucleus-entropy uncertainty.
//!
//! At each generation step the model emits a probability distribution over
//! the extended vocabulary. Its nucleus (the minimal top-k prefix reaching
//! cumulative mass p, renormalized) is summarized by Shannon entropy in
//! nats: the term-level uncertainty. Query-level uncertainty aggregates the
//! term values by mean, variance, max, and entropy.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub const DEFAULT_NUCLEUS_P: f64 = 0.95;

/// Minimal top-k prefix of a distribution reaching mass `p_threshold`,
/// renormalized over its support.
#[derive(Clone, Debug)]
pub struct NucleusDistribution {
    /// Token ids, most probable first (ties by id ascending).
    pub support: Vec<u32>,
    /// Renormalized probabilities aligned with `support`.
    pub probs: Vec<f64>,
    pub p_threshold: f64,
}

/// The four query-level statistics over term-level uncertainties.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UncertaintyAggregates {
    pub mean: f64,
    pub variance: f64,
    pub max: f64,
    pub entropy: f64,
}

impl UncertaintyAggregates {
    pub fn as_array(&self) -> [f64; 4] {
        [self.mean, self.variance, self.max, self.entropy]
    }
}

/// Nucleus of `dist` at threshold `p`: sort descending (ties by id), take
/// the minimal prefix with cumulative mass ≥ p, renormalize. If the whole
/// positive support stays below p (rounding at p = 1), it is used entirely.
pub fn nucleus(dist: &[f64], p: f64) -> Result<NucleusDistribution> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Contract(format!("nucleus p must be in (0, 1], got {p}")));
    }
    let sum: f64 = dist.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::Contract(format!(
            "nucleus input sums to {sum}, not a probability distribution"
        )));
    }
    let mut order: Vec<usize> = (0..dist.len()).filter(|&i| dist[i] > 0.0).collect();
    order.sort_by(|&a, &b| dist[b].total_cmp(&dist[a]).then_with(|| a.cmp(&b)));
    let mut support = Vec::new();
    let mut cum = 0.0;
    for &i in &order {
        support.push(i as u32);
        cum += dist[i];
        if cum >= p {
            break;
        }
    }
    let probs = support.iter().map(|&i| dist[i as usize] / cum).collect();
    Ok(NucleusDistribution {
        support,
        probs,
        p_threshold: p,
    })
}

/// Shannon entropy in nats of the renormalized nucleus; `0·log 0 := 0`.
pub fn term_uncertainty(nd: &NucleusDistribution) -> f64 {
    entropy_nats(&nd.probs)
}

fn entropy_nats(probs: &[f64]) -> f64 {
    -probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>()
}

/// Mean, population variance, max, and entropy of the term-level values.
/// The entropy aggregate treats the (non-negative) values as an
/// unnormalized distribution; an all-zero list gets entropy 0.
pub fn query_aggregates(term_uncertainties: &[f64]) -> Result<UncertaintyAggregates> {
    if term_uncertainties.is_empty() {
        return Err(Error::Contract(
            "query_aggregates needs at least one term".into(),
        ));
    }
    if term_uncertainties.iter().any(|&u| u < 0.0 || !u.is_finite()) {
        return Err(Error::Contract(
            "term uncertainties must be finite and non-negative".into(),
        ));
    }
    let n = term_uncertainties.len() as f64;
    let mean = term_uncertainties.iter().sum::<f64>() / n;
    let variance = term_uncertainties
        .iter()
        .map(|&u| (u - mean) * (u - mean))
        .sum::<f64>()
        / n;
    let max = term_uncertainties.iter().copied().fold(0.0, f64::max);
    let total: f64 = term_uncertainties.iter().sum();
    let entropy = if total > 0.0 {
        let normalized: Vec<f64> = term_uncertainties.iter().map(|&u| u / total).collect();
        entropy_nats(&normalized)
    } else {
        0.0
    };
    Ok(UncertaintyAggregates {
        mean,
        variance,
        max,
        entropy,
    })
}

/// Fractional ranks, average rank for ties, 1-based.
fn fractional_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let avg = (i + j + 2) as f64 / 2.0; // average of 1-based ranks i+1..=j+1
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        cov += (x - mx) * (y - my);
        vx += (x - mx) * (x - mx);
        vy += (y - my) * (y - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return Err(Error::Numeric(
            "correlation undefined when one variable has zero rank variance".into(),
        ));
    }
    Ok(cov / (vx * vy).sqrt())
}

/// Spearman rank correlation (Pearson over fractional ranks).
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::Contract(format!(
            "spearman needs two equal-length lists of ≥ 2 values, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    pearson(&fractional_ranks(xs), &fractional_ranks(ys))
}

/// Spearman correlation plus a two-sided p-value from the t approximation
/// with n-2 degrees of freedom.
pub fn spearman_test(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    let r = spearman(xs, ys)?;
    let n = xs.len() as f64;
    let denom = 1.0 - r * r;
    if denom < 1e-15 {
        return Ok((r, 0.0));
    }
    let t = r * ((n - 2.0) / denom).sqrt();
    let p = crate::metrics::student_t_two_sided_p(t, n - 2.0)?;
    Ok((r, p))
}

/// Distribution summary of one query position within a length group.
#[derive(Clone, Copy, Debug)]
pub struct PositionSummary {
    pub count: usize,
    pub mean: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let idx = q * (n - 1) as f64;
    let lo = idx.floor() as usize;
    let frac = idx - lo as f64;
    if lo + 1 < n {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    } else {
        sorted[n - 1]
    }
}

/// Group per-query term-uncertainty rows by query length; for each length
/// present, one summary per position (the last position is the
/// terminator's).
pub fn position_stats(rows: &[Vec<f64>]) -> BTreeMap<usize, Vec<PositionSummary>> {
    let mut groups: BTreeMap<usize, Vec<&Vec<f64>>> = BTreeMap::new();
    for row in rows {
        if !row.is_empty() {
            groups.entry(row.len()).or_default().push(row);
        }
    }
    groups
        .into_iter()
        .map(|(len, members)| {
            let summaries = (0..len)
                .map(|pos| {
                    let mut values: Vec<f64> = members.iter().map(|r| r[pos]).collect();
                    values.sort_by(f64::total_cmp);
                    let mean = values.iter().sum::<f64>() / values.len() as f64;
                    PositionSummary {
                        count: values.len(),
                        mean,
                        q1: quantile(&values, 0.25),
                        median: quantile(&values, 0.5),
                        q3: quantile(&values, 0.75),
                    }
                })
                .collect();
            (len, summaries)
        })
        .collect()
}

/// Relevance-vs-uncertainty CSV row (one per scored query-document pair).
#[derive(Clone, Debug)]
pub struct RelevanceUncertaintyRow {
    pub query_id: String,
    pub doc_id: String,
    pub relevance_score: f64,
    pub aggregates: UncertaintyAggregates,
}

pub fn write_relevance_uncertainty_csv(
    path: &Path,
    rows: &[RelevanceUncertaintyRow],
) -> Result<()> {
    let mut out = Vec::new();
    writeln!(
        out,
        "query_id,doc_id,relevance_score,unc_mean,unc_var,unc_max,unc_entropy"
    )?;
    for r in rows {
        writeln!(
            out,
            "{},{},{:.6},{:.6},{:.6},{:.6},{:.6}",
            r.query_id,
            r.doc_id,
            r.relevance_score,
            r.aggregates.mean,
            r.aggregates.variance,
            r.aggregates.max,
            r.aggregates.entropy
        )?;
    }
    crate::cli::write_atomic(path, &out)
}

pub fn write_position_csv(
    path: &Path,
    stats: &BTreeMap<usize, Vec<PositionSummary>>,
) -> Result<()> {
    let mut out = Vec::new();
    writeln!(out, "query_length,position,q1,median,q3")?;
    for (len, summaries) in stats {
        for (pos, s) in summaries.iter().enumerate() {
            writeln!(
                out,
                "{},{},{:.6},{:.6},{:.6}",
                len,
                pos + 1,
                s.q1,
                s.median,
                s.q3
            )?;
        }
    }
    crate::cli::write_atomic(path, &out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nucleus_hand_case() {
        let nd = nucleus(&[0.5, 0.3, 0.15, 0.04, 0.01], 0.95).unwrap();
        assert_eq!(nd.support, vec![0, 1, 2]);
        let want = [0.5263, 0.3158, 0.1579];
        for (p, w) in nd.probs.iter().zip(want) {
            assert!((p - w).abs() < 1e-4, "{p} vs {w}");
        }
    }

    #[test]
    fn nucleus_of_one_hot_is_that_token() {
        let nd = nucleus(&[0.0, 1.0, 0.0], 0.95).unwrap();
        assert_eq!(nd.support, vec![1]);
        assert_eq!(nd.probs, vec![1.0]);
        assert_eq!(term_uncertainty(&nd), 0.0);
    }

    #[test]
    fn nucleus_at_full_mass_keeps_positive_support() {
        let nd = nucleus(&[0.25, 0.0, 0.5, 0.25], 1.0).unwrap();
        assert_eq!(nd.support, vec![2, 0, 3]);
        for (p, w) in nd.probs.iter().zip([0.5, 0.25, 0.25]) {
            assert!((p - w).abs() < 1e-12);
        }
    }

    #[test]
    fn nucleus_ties_break_by_token_id() {
        let nd = nucleus(&[0.25, 0.25, 0.25, 0.25], 0.5).unwrap();
        assert_eq!(nd.support, vec![0, 1]);
    }

    #[test]
    fn nucleus_rejects_bad_thresholds_and_non_distributions() {
        assert!(nucleus(&[1.0], 0.0).is_err());
        assert!(nucleus(&[1.0], 1.5).is_err());
        assert!(nucleus(&[0.2, 0.2], 0.95).is_err());
    }

    #[test]
    fn support_grows_with_p() {
        let dist = [0.4, 0.3, 0.2, 0.05, 0.05];
        let mut prev = 0;
        for p in [0.3, 0.5, 0.7, 0.9, 0.97, 1.0] {
            let k = nucleus(&dist, p).unwrap().support.len();
            assert!(k >= prev, "support shrank at p={p}");
            prev = k;
        }
    }

    #[test]
    fn uniform_entropy_is_ln_k() {
        let nd = nucleus(&[0.25; 4], 1.0).unwrap();
        assert!((term_uncertainty(&nd) - 4.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn renormalized_entropy_hand_case() {
        let nd = nucleus(&[0.5, 0.3, 0.15, 0.04, 0.01], 0.95).unwrap();
        assert!((term_uncertainty(&nd) - 0.9932).abs() < 1e-4);
    }

    #[test]
    fn flat_nucleus_is_more_uncertain_than_skewed_at_equal_max() {
        let flat = nucleus(&[0.5, 0.25, 0.25], 1.0).unwrap();
        let skewed = nucleus(&[0.5, 0.45, 0.05], 1.0).unwrap();
        assert!(term_uncertainty(&flat) > term_uncertainty(&skewed));
    }

    #[test]
    fn aggregates_hand_cases() {
        let a = query_aggregates(&[2.0, 2.0, 2.0]).unwrap();
        assert_eq!(a.mean, 2.0);
        assert_eq!(a.variance, 0.0);
        assert_eq!(a.max, 2.0);

        let b = query_aggregates(&[1.0, 1.0]).unwrap();
        assert!((b.entropy - 2.0f64.ln()).abs() < 1e-12);

        let c = query_aggregates(&[0.0, 2.0]).unwrap();
        assert_eq!(c.mean, 1.0);
        assert_eq!(c.variance, 1.0);
        assert_eq!(c.max, 2.0);

        assert!(query_aggregates(&[]).is_err());
        assert!(query_aggregates(&[-0.1]).is_err());
        assert_eq!(query_aggregates(&[0.0, 0.0]).unwrap().entropy, 0.0);
    }

    #[test]
    fn aggregates_keep_max_at_least_mean() {
        let a = query_aggregates(&[0.3, 1.7, 0.9, 0.2]).unwrap();
        assert!(a.max >= a.mean);
    }

    #[test]
    fn spearman_identity_and_reversal() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let up: Vec<f64> = xs.iter().map(|&x| 10.0 * x + 3.0).collect();
        let down: Vec<f64> = xs.iter().map(|&x| -x).collect();
        assert!((spearman(&xs, &up).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&xs, &down).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn spearman_hand_case() {
        let r = spearman(&[1.0, 2.0, 3.0], &[2.0, 1.0, 3.0]).unwrap();
        assert!((r - 0.5).abs() < 1e-12);
    }

    #[test]
    fn spearman_rejects_constant_lists() {
        assert!(spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn spearman_test_is_significant_for_long_monotone_lists() {
        let xs: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| -x * 0.5).collect();
        let (r, p) = spearman_test(&xs, &ys).unwrap();
        assert!((r + 1.0).abs() < 1e-12);
        assert!(p < 1e-6);
    }

    #[test]
    fn position_stats_hand_case() {
        let rows = vec![
            vec![1.0, 2.0, 3.0, 4.0, 0.5],
            vec![3.0, 2.0, 1.0, 4.0, 0.1],
        ];
        let stats = position_stats(&rows);
        let means: Vec<f64> = stats[&5].iter().map(|s| s.mean).collect();
        for (m, w) in means.iter().zip([2.0, 2.0, 2.0, 4.0, 0.3]) {
            assert!((m - w).abs() < 1e-12);
        }
    }

    #[test]
    fn single_member_group_collapses_quartiles() {
        let rows = vec![vec![0.7, 1.4]];
        let stats = position_stats(&rows);
        let s = &stats[&2][0];
        assert_eq!((s.q1, s.median, s.q3), (0.7, 0.7, 0.7));
    }

    #[test]
    fn grouping_partitions_the_input() {
        let rows = vec![
            vec![1.0],
            vec![1.0, 2.0],
            vec![2.0],
            vec![1.0, 2.0, 3.0],
            vec![0.5, 0.6],
        ];
        let stats = position_stats(&rows);
        let total: usize = stats.values().map(|v| v[0].count).sum();
        assert_eq!(total, rows.len());
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn distribution() -> impl Strategy<Value = Vec<f64>> {
            proptest::collection::vec(0.0001f64..1.0, 2..24).prop_map(|mut v| {
                let sum: f64 = v.iter().sum();
                v.iter_mut().for_each(|p| *p /= sum);
                v
            })
        }

        proptest! {
            /// Nucleus support never shrinks as p grows, and entropy stays
            /// within [0, ln k].
            #[test]
            fn support_monotone_and_entropy_bounded(dist in distribution()) {
                let mut prev = 0usize;
                for p in [0.2, 0.5, 0.8, 0.95, 1.0] {
                    let nd = nucleus(&dist, p).unwrap();
                    prop_assert!(nd.support.len() >= prev);
                    prev = nd.support.len();
                    let h = term_uncertainty(&nd);
                    let bound = (nd.support.len() as f64).ln();
                    prop_assert!(h >= -1e-12 && h <= bound + 1e-9);
                    let mass: f64 = nd.probs.iter().sum();
                    prop_assert!((mass - 1.0).abs() < 1e-9);
                }
            }
        }
    }
}
