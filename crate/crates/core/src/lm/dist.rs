use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::{LmError, TokenId};

/// Tolerance on `|logsumexp(logp)|` accepted as normalized.
pub const NORMALIZATION_TOL: f64 = 1e-6;

/// Natural-log probabilities over a whole vocabulary at one decode step.
///
/// Entries may be `-inf` for impossible tokens but never NaN or `+inf`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LogProbDistribution {
    logp: Vec<f64>,
}

/// Stable `log(sum(exp(x)))`. Returns `-inf` for an empty or all `-inf` slice.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = xs.iter().map(|x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Descending by value, ties broken by lower token id.
#[inline]
pub(crate) fn rank_order(a: (usize, f64), b: (usize, f64)) -> Ordering {
    b.1.partial_cmp(&a.1)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.0.cmp(&b.0))
}

impl LogProbDistribution {
    /// Wraps already-normalized log-probabilities, checking the invariants.
    pub fn new(logp: Vec<f64>) -> Result<Self, LmError> {
        if logp.is_empty() {
            return Err(LmError::EmptyDistribution);
        }
        if logp.iter().any(|x| x.is_nan() || *x == f64::INFINITY) {
            return Err(LmError::InvalidLogProb);
        }
        let lse = logsumexp(&logp);
        if !(lse.abs() <= NORMALIZATION_TOL) {
            return Err(LmError::NotNormalized(lse));
        }
        Ok(Self { logp })
    }

    /// Normalizes arbitrary finite-or-`-inf` scores.
    pub fn from_logits(mut logits: Vec<f64>) -> Result<Self, LmError> {
        if logits.is_empty() {
            return Err(LmError::EmptyDistribution);
        }
        if logits.iter().any(|x| x.is_nan() || *x == f64::INFINITY) {
            return Err(LmError::InvalidLogProb);
        }
        let lse = logsumexp(&logits);
        if lse == f64::NEG_INFINITY {
            return Err(LmError::InvalidLogProb);
        }
        for x in &mut logits {
            *x -= lse;
        }
        Ok(Self { logp: logits })
    }

    /// Normalizes non-negative weights (probabilities up to a constant).
    pub fn from_probs(probs: &[f64]) -> Result<Self, LmError> {
        if probs.iter().any(|p| p.is_nan() || *p < 0.0 || p.is_infinite()) {
            return Err(LmError::InvalidLogProb);
        }
        let total: f64 = probs.iter().sum();
        if !(total > 0.0) {
            return Err(LmError::InvalidLogProb);
        }
        let ln_total = total.ln();
        Self::new(probs.iter().map(|p| p.ln() - ln_total).collect())
    }

    /// Uniform distribution over `n` tokens.
    pub fn uniform(n: usize) -> Self {
        let lp = -(n as f64).ln();
        Self { logp: vec![lp; n] }
    }

    /// Wraps values without validation. Used where normalization holds by
    /// construction.
    pub(crate) fn from_raw(logp: Vec<f64>) -> Self {
        Self { logp }
    }

    pub fn len(&self) -> usize {
        self.logp.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logp.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.logp
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.logp
    }

    #[inline]
    pub fn logp(&self, id: TokenId) -> f64 {
        self.logp[id.index()]
    }

    pub fn prob(&self, id: TokenId) -> f64 {
        self.logp(id).exp()
    }

    pub fn probs(&self) -> Vec<f64> {
        self.logp.iter().map(|x| x.exp()).collect()
    }

    pub fn logsumexp(&self) -> f64 {
        logsumexp(&self.logp)
    }

    /// Highest-probability token, lowest id on ties.
    pub fn argmax(&self) -> TokenId {
        let mut best = 0;
        for (i, &x) in self.logp.iter().enumerate().skip(1) {
            if x > self.logp[best] {
                best = i;
            }
        }
        TokenId::from(best)
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        self.logp
            .iter()
            .filter(|x| x.is_finite())
            .map(|&x| -x.exp() * x)
            .sum()
    }

    /// The `r` highest-ranked token ids (descending logp, lower id on ties),
    /// in rank order.
    pub fn top_r(&self, r: usize) -> Vec<TokenId> {
        let r = r.min(self.logp.len());
        if r == 0 {
            return Vec::new();
        }
        let mut idx: Vec<usize> = (0..self.logp.len()).collect();
        let cmp = |a: &usize, b: &usize| rank_order((*a, self.logp[*a]), (*b, self.logp[*b]));
        if r < idx.len() {
            idx.select_nth_unstable_by(r - 1, cmp);
            idx.truncate(r);
        }
        idx.sort_unstable_by(cmp);
        idx.into_iter().map(TokenId::from).collect()
    }

    /// All token ids sorted by descending logp, lower id on ties.
    pub fn ranked(&self) -> Vec<TokenId> {
        self.top_r(self.logp.len())
    }

    /// Temperature scaling: `logp / tau`, renormalized.
    pub fn with_temperature(&self, tau: f64) -> Result<Self, LmError> {
        apply_temperature(self, tau)
    }
}

/// Rescales a distribution by temperature `tau` and renormalizes.
///
/// `tau == 1` returns the input unchanged.
pub fn apply_temperature(dist: &LogProbDistribution, tau: f64) -> Result<LogProbDistribution, LmError> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(LmError::NonPositiveTemperature(tau));
    }
    if tau == 1.0 {
        return Ok(dist.clone());
    }
    let scaled: Vec<f64> = dist.logp.iter().map(|x| x / tau).collect();
    LogProbDistribution::from_logits(scaled)
}
