//! Single-model baselines: greedy argmax and the three truncated samplers.

use rand::Rng;

use super::DecodeError;
use crate::lm::{rank_order, LogProbDistribution, TokenId};

/// The most probable token; lowest id on ties.
pub fn greedy(dist: &LogProbDistribution) -> TokenId {
    dist.argmax()
}

/// Smallest probability-ranked prefix whose mass reaches `p`. If rounding
/// keeps the cumulative mass below `p`, every token with nonzero
/// probability is kept.
pub fn nucleus_support(dist: &LogProbDistribution, p: f64) -> Result<Vec<TokenId>, DecodeError> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(DecodeError::InvalidParameter(format!("nucleus p must be in (0, 1], got {p}")));
    }
    let mut out = Vec::new();
    let mut mass = 0.0;
    for id in dist.ranked() {
        let q = dist.prob(id);
        if q == 0.0 {
            break;
        }
        out.push(id);
        mass += q;
        if mass >= p {
            break;
        }
    }
    Ok(out)
}

/// Locally typical set: tokens ordered by `| -logp - H |` ascending (lower
/// id on ties), accumulated until their mass reaches `tau`.
pub fn typical_support(dist: &LogProbDistribution, tau: f64) -> Result<Vec<TokenId>, DecodeError> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(DecodeError::InvalidParameter(format!("typical tau must be in (0, 1], got {tau}")));
    }
    let entropy = dist.entropy();
    let lp = dist.as_slice();
    let mut order: Vec<(usize, f64)> = lp
        .iter()
        .enumerate()
        .filter(|(_, x)| x.is_finite())
        .map(|(i, &x)| (i, -(-x - entropy).abs()))
        .collect();
    // negated deviation so that rank_order (descending) sorts by smallest deviation
    order.sort_unstable_by(|a, b| rank_order(*a, *b));
    let mut out = Vec::new();
    let mut mass = 0.0;
    for (i, _) in order {
        out.push(TokenId::from(i));
        mass += lp[i].exp();
        if mass >= tau {
            break;
        }
    }
    Ok(out)
}

/// The `k` most probable tokens.
pub fn topk_support(dist: &LogProbDistribution, k: usize) -> Result<Vec<TokenId>, DecodeError> {
    if k == 0 {
        return Err(DecodeError::InvalidK(0));
    }
    Ok(dist.top_r(k))
}

/// Draws from `dist` restricted to `support`, renormalized.
pub fn sample_from<R: Rng + ?Sized>(dist: &LogProbDistribution, support: &[TokenId], rng: &mut R) -> TokenId {
    debug_assert!(!support.is_empty());
    let weights: Vec<f64> = support.iter().map(|&id| dist.prob(id)).collect();
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return support[0];
    }
    let u = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    for (id, w) in support.iter().zip(&weights) {
        acc += w;
        if u < acc {
            return *id;
        }
    }
    // u landed in the rounding gap above the final partial sum
    *support
        .iter()
        .zip(&weights)
        .rev()
        .find(|(_, w)| **w > 0.0)
        .map(|(id, _)| id)
        .unwrap_or(&support[0])
}

pub fn topk_sample<R: Rng + ?Sized>(dist: &LogProbDistribution, k: usize, rng: &mut R) -> Result<TokenId, DecodeError> {
    Ok(sample_from(dist, &topk_support(dist, k)?, rng))
}

pub fn nucleus_sample<R: Rng + ?Sized>(dist: &LogProbDistribution, p: f64, rng: &mut R) -> Result<TokenId, DecodeError> {
    Ok(sample_from(dist, &nucleus_support(dist, p)?, rng))
}

pub fn typical_sample<R: Rng + ?Sized>(
    dist: &LogProbDistribution,
    tau: f64,
    rng: &mut R,
) -> Result<TokenId, DecodeError> {
    Ok(sample_from(dist, &typical_support(dist, tau)?, rng))
}
