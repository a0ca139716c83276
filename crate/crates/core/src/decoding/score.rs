use std::cmp::Ordering;

use super::DecodeError;
use crate::lm::TokenId;

/// Single-amateur contrastive score: `expert_lp - alpha * amateur_lp`.
#[inline]
pub fn cd_score(expert_lp: f64, amateur_lp: f64, alpha: f64) -> f64 {
    expert_lp - alpha * amateur_lp
}

/// Mean penalization: the amateur term is the average of `amateur_lps`,
/// summed in the given order.
#[inline]
pub fn macd_mean_score(expert_lp: f64, amateur_lps: &[f64], alpha: f64) -> f64 {
    let mut sum = 0.0;
    for lp in amateur_lps {
        sum += lp;
    }
    expert_lp - alpha * (sum / amateur_lps.len() as f64)
}

/// Consensus penalization: the amateur term is the consensus ratio.
pub fn macd_consensus_score(expert_lp: f64, cr: f64, alpha: f64) -> Result<f64, DecodeError> {
    if !(0.0..=1.0).contains(&cr) {
        return Err(DecodeError::CrOutOfRange(cr));
    }
    Ok(expert_lp - alpha * cr)
}

/// Candidate preference: higher score, then higher expert log-prob, then
/// lower token id. `Less` means `a` is preferred.
#[inline]
pub(crate) fn prefer(a: (f64, f64, TokenId), b: (f64, f64, TokenId)) -> Ordering {
    b.0.partial_cmp(&a.0)
        .unwrap_or(Ordering::Equal)
        .then_with(|| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal))
        .then_with(|| a.2.cmp(&b.2))
}

/// Index of the best candidate under [`prefer`].
pub(crate) fn select_best(ids: &[TokenId], expert_lp: &[f64], scores: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..ids.len() {
        if prefer(
            (scores[i], expert_lp[i], ids[i]),
            (scores[best], expert_lp[best], ids[best]),
        ) == Ordering::Less
        {
            best = i;
        }
    }
    best
}
