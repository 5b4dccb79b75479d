//! Pairwise ranking losses over query log-probabilities.
//!
//! Scores are sums of log-probabilities, so they live in (-inf, 0]. The
//! unlikelihood term log(1 - P) is evaluated through [`log1mexp`] because P
//! itself underflows for all but the shortest queries.

use serde::{Deserialize, Serialize};

use crate::autodiff::Var;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LossKind {
    Nll,
    Marg { margin: f64 },
    Nl3u,
}

impl LossKind {
    pub fn name(&self) -> &'static str {
        match self {
            LossKind::Nll => "nll",
            LossKind::Marg { .. } => "marg",
            LossKind::Nl3u => "nl3u",
        }
    }

    /// Whether the loss consumes the non-relevant document at all.
    pub fn needs_negative(&self) -> bool {
        !matches!(self, LossKind::Nll)
    }

    pub fn validate(&self) -> Result<()> {
        if let LossKind::Marg { margin } = self {
            if *margin <= 0.0 {
                return Err(Error::Contract(format!(
                    "margin must be positive, got {margin}"
                )));
            }
        }
        Ok(())
    }

    /// Parse `nll`, `marg`, `marg:<b>`, or `nl3u`.
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "nll" => Ok(LossKind::Nll),
            "nl3u" => Ok(LossKind::Nl3u),
            "marg" => Ok(LossKind::Marg { margin: 1.0 }),
            other => {
                if let Some(b) = other.strip_prefix("marg:") {
                    let margin: f64 = b
                        .parse()
                        .map_err(|_| Error::Config(format!("bad margin {b:?}")))?;
                    let kind = LossKind::Marg { margin };
                    kind.validate()?;
                    Ok(kind)
                } else {
                    Err(Error::Config(format!(
                        "unknown loss {other:?} (expected nll, marg[:b], or nl3u)"
                    )))
                }
            }
        }
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LossKind::Marg { margin } => write!(f, "marg:{margin}"),
            other => f.write_str(other.name()),
        }
    }
}

/// `log(1 - e^l)` for `l < 0`, stable across the whole range.
pub fn log1mexp(l: f64) -> f64 {
    if l < -std::f64::consts::LN_2 {
        (-l.exp()).ln_1p()
    } else {
        (-l.exp_m1()).ln()
    }
}

/// Negative log likelihood of the relevant document: `-log P(Q|D+)`.
pub fn nll_loss(log_p_pos: f64) -> Result<f64> {
    if log_p_pos > 0.0 {
        return Err(Error::Contract(format!(
            "log-probability must be ≤ 0, got {log_p_pos}"
        )));
    }
    Ok(-log_p_pos)
}

/// Hinge on the score difference: `max(0, b - log P(Q|D+) + log P(Q|D-))`.
pub fn margin_loss(log_p_pos: f64, log_p_neg: f64, margin: f64) -> f64 {
    (margin - log_p_pos + log_p_neg).max(0.0)
}

/// Likelihood of D+ plus unlikelihood of D-:
/// `-log P(Q|D+) - log(1 - P(Q|D-))`.
pub fn nl3u_loss(log_p_pos: f64, log_p_neg: f64) -> Result<f64> {
    if log_p_pos > 0.0 || log_p_neg > 0.0 {
        return Err(Error::Contract(format!(
            "log-probabilities must be ≤ 0, got ({log_p_pos}, {log_p_neg})"
        )));
    }
    if log_p_neg == 0.0 {
        return Err(Error::Numeric(
            "unlikelihood is undefined at P(Q|D-) = 1".into(),
        ));
    }
    Ok(-log_p_pos - log1mexp(log_p_neg))
}

/// Differentiable loss over tape scalars. `log_p_neg` is required by every
/// kind except NLL, which must not touch it.
pub fn loss_on_tape<'t>(
    kind: LossKind,
    log_p_pos: Var<'t>,
    log_p_neg: Option<Var<'t>>,
) -> Result<Var<'t>> {
    match kind {
        LossKind::Nll => Ok(log_p_pos.neg()),
        LossKind::Marg { margin } => {
            let neg = log_p_neg
                .ok_or_else(|| Error::Contract("margin loss needs the negative document".into()))?;
            Ok(neg.sub(log_p_pos)?.add_const(margin).relu())
        }
        LossKind::Nl3u => {
            let neg = log_p_neg
                .ok_or_else(|| Error::Contract("nl3u needs the negative document".into()))?;
            log_p_pos.neg().sub(neg.log1mexp()?)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nll_flips_sign_and_rejects_positive_logs() {
        assert_eq!(nll_loss(-2.3).unwrap(), 2.3);
        assert_eq!(nll_loss(0.0).unwrap(), 0.0);
        assert!(nll_loss(0.5).is_err());
    }

    #[test]
    fn nll_batch_mean() {
        let mean = (nll_loss(-1.0).unwrap() + nll_loss(-3.0).unwrap()) / 2.0;
        assert_eq!(mean, 2.0);
    }

    #[test]
    fn margin_hand_cases() {
        assert_eq!(margin_loss(-2.0, -5.0, 1.0), 0.0);
        assert_eq!(margin_loss(-5.0, -2.0, 1.0), 4.0);
        let b = 0.7;
        assert!((margin_loss(-3.0, -3.0, b) - b).abs() < 1e-12);
        assert!(margin_loss(-100.0, -1.0, 1.0) >= 0.0);
    }

    #[test]
    fn nl3u_matches_hand_arithmetic() {
        let lp = 0.1f64.ln();
        let loss = nl3u_loss(lp, lp).unwrap();
        // 2.3026 - ln(0.9) = 2.3026 + 0.10536
        assert!((loss - 2.4079).abs() < 1e-4, "{loss}");

        let unlikelihood = nl3u_loss(0.0, 0.5f64.ln()).unwrap();
        assert!((unlikelihood - 0.6931).abs() < 1e-4, "{unlikelihood}");

        // As P(Q|D-) → 0 the unlikelihood term vanishes.
        let limit = nl3u_loss(-2.0, -1e9).unwrap();
        assert!((limit - 2.0).abs() < 1e-12);

        assert!(nl3u_loss(-1.0, 0.0).is_err());
    }

    #[test]
    fn log1mexp_is_finite_and_monotone() {
        let probes = [-1e-12, -1e-6, -1.0, -50.0];
        for &l in &probes {
            assert!(log1mexp(l).is_finite(), "log1mexp({l})");
        }
        // l1 > l2 implies f(l1) < f(l2): walking l downward, f climbs to 0.
        let mut prev = f64::NEG_INFINITY;
        for &l in &[-1e-12, -1e-6, -1e-3, -1.0, -10.0, -50.0] {
            let v = log1mexp(l);
            assert!(v > prev, "not monotone at {l}");
            prev = v;
        }
    }
}
