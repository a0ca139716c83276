use serde::{Deserialize, Serialize};

use super::DecodeError;
use crate::ensemble::{consensus_ratio, AmateurEnsemble, AmateurEvaluation, EnsembleMode, VoteRule};
use crate::lm::{rank_order, LogProbDistribution, TokenId};

/// The plausible tokens at one step, with their expert log-probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    ids: Vec<TokenId>,
    expert_logp: Vec<f64>,
}

impl CandidateSet {
    /// Gathers `ids` from `dist`. Fails on an empty or duplicated id list.
    pub fn from_ids(dist: &LogProbDistribution, ids: Vec<TokenId>) -> Result<Self, DecodeError> {
        if ids.is_empty() {
            return Err(DecodeError::EmptyCandidateSet);
        }
        let mut seen = std::collections::HashSet::with_capacity(ids.len());
        if !ids.iter().all(|id| seen.insert(*id)) {
            return Err(DecodeError::InvalidParameter("duplicate candidate id".into()));
        }
        crate::lm::validate_ids(&ids, dist.len())?;
        let expert_logp = ids.iter().map(|&id| dist.logp(id)).collect();
        Ok(Self { ids, expert_logp })
    }

    pub fn ids(&self) -> &[TokenId] {
        &self.ids
    }

    pub fn expert_logp(&self) -> &[f64] {
        &self.expert_logp
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    fn retain_mask(&self, keep: &[bool]) -> Self {
        let (ids, expert_logp) = self
            .ids
            .iter()
            .zip(&self.expert_logp)
            .zip(keep)
            .filter(|(_, k)| **k)
            .map(|((id, lp), _)| (*id, *lp))
            .unzip();
        Self { ids, expert_logp }
    }
}

/// Plausibility constraint applied to the expert distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "filter", rename_all = "kebab-case")]
pub enum FilterSpec {
    /// The `k` most probable tokens.
    TopK { k: usize },
    /// Tokens within `delta` nats of the expert's best.
    DeltaMargin { delta: f64 },
    /// Delta-margin survivors whose consensus ratio is below `cr_cap`,
    /// falling back to the plain delta-margin set if none survive.
    Joint { delta: f64, cr_cap: f64 },
}

impl Default for FilterSpec {
    fn default() -> Self {
        FilterSpec::TopK { k: 50 }
    }
}

impl FilterSpec {
    pub fn validate(&self) -> Result<(), DecodeError> {
        match *self {
            FilterSpec::TopK { k: 0 } => Err(DecodeError::InvalidK(0)),
            FilterSpec::DeltaMargin { delta } | FilterSpec::Joint { delta, .. } if !(delta >= 0.0) => {
                Err(DecodeError::NegativeDelta(delta))
            }
            FilterSpec::Joint { cr_cap, .. } if !(cr_cap > 0.0) => Err(DecodeError::InvalidParameter(
                format!("cr_cap must be > 0, got {cr_cap}"),
            )),
            _ => Ok(()),
        }
    }
}

/// The `min(k, |V|)` most probable tokens, sorted by descending log-prob
/// with lower ids first on ties.
pub fn filter_topk(dist: &LogProbDistribution, k: usize) -> Result<CandidateSet, DecodeError> {
    if k == 0 {
        return Err(DecodeError::InvalidK(k));
    }
    CandidateSet::from_ids(dist, dist.top_r(k))
}

/// Every token with `logp >= max_logp - delta` and finite logp, in rank
/// order. The argmax is always included.
pub fn filter_delta_margin(dist: &LogProbDistribution, delta: f64) -> Result<CandidateSet, DecodeError> {
    if !(delta >= 0.0) {
        return Err(DecodeError::NegativeDelta(delta));
    }
    let lp = dist.as_slice();
    let best = lp[dist.argmax().index()];
    let threshold = best - delta;
    let mut idx: Vec<usize> = (0..lp.len())
        .filter(|&i| lp[i] >= threshold && lp[i] > f64::NEG_INFINITY)
        .collect();
    idx.sort_unstable_by(|&a, &b| rank_order((a, lp[a]), (b, lp[b])));
    CandidateSet::from_ids(dist, idx.into_iter().map(TokenId::from).collect())
}

/// Keeps members of `base` whose ratio is below `cr_cap`; returns `base`
/// unchanged if that would leave nothing.
pub fn restrict_by_consensus(base: &CandidateSet, ratios: &[f64], cr_cap: f64) -> CandidateSet {
    let keep: Vec<bool> = ratios.iter().map(|&cr| cr < cr_cap).collect();
    if keep.iter().any(|&k| k) {
        base.retain_mask(&keep)
    } else {
        base.clone()
    }
}

/// Delta-margin filtering tightened by amateur consensus.
pub fn filter_joint(
    dist: &LogProbDistribution,
    delta: f64,
    ensemble: &AmateurEnsemble,
    context: &[TokenId],
    vote_rule: &VoteRule,
    cr_cap: f64,
    mode: EnsembleMode,
) -> Result<CandidateSet, DecodeError> {
    FilterSpec::Joint { delta, cr_cap }.validate()?;
    let base = filter_delta_margin(dist, delta)?;
    let dists = ensemble.member_distributions(context, mode)?;
    let eval = AmateurEvaluation::from_distributions(&dists, base.ids(), None);
    let ratios = consensus_ratio(&eval, vote_rule, Some(&dists))?;
    Ok(restrict_by_consensus(&base, &ratios, cr_cap))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::{LanguageModel, SyntheticTableModel};
    use std::sync::Arc;

    fn dist(p: &[f64]) -> LogProbDistribution {
        LogProbDistribution::from_probs(p).unwrap()
    }

    #[test]
    fn topk_saturates() {
        let d = dist(&[0.1, 0.2, 0.7]);
        assert_eq!(filter_topk(&d, 10).unwrap().len(), 3);
    }

    #[test]
    fn topk_picks_top_two_of_five() {
        // sorted by hand: id3 (0.4) > id0 (0.25) > id4 (0.2) > id1 (0.1) > id2 (0.05)
        let d = dist(&[0.25, 0.1, 0.05, 0.4, 0.2]);
        let c = filter_topk(&d, 2).unwrap();
        assert_eq!(c.ids(), &[TokenId(3), TokenId(0)]);
        assert_eq!(c.expert_logp()[0], d.logp(TokenId(3)));
    }

    #[test]
    fn topk_uniform_tie_break() {
        let c = filter_topk(&LogProbDistribution::uniform(6), 3).unwrap();
        assert_eq!(c.ids(), &[TokenId(0), TokenId(1), TokenId(2)]);
        assert!(matches!(
            filter_topk(&LogProbDistribution::uniform(6), 0),
            Err(DecodeError::InvalidK(0))
        ));
    }

    #[test]
    fn delta_margin_cases() {
        let d = LogProbDistribution::from_logits(vec![-0.5, -1.0, -3.0]).unwrap();
        let c = filter_delta_margin(&d, 1.0).unwrap();
        assert_eq!(c.ids(), &[TokenId(0), TokenId(1)]);
        let c0 = filter_delta_margin(&d, 0.0).unwrap();
        assert_eq!(c0.ids(), &[TokenId(0)]);
        let tie = dist(&[0.4, 0.4, 0.2]);
        assert_eq!(filter_delta_margin(&tie, 0.0).unwrap().len(), 2);
        assert!(matches!(
            filter_delta_margin(&d, -0.1),
            Err(DecodeError::NegativeDelta(_))
        ));
    }

    #[test]
    fn delta_margin_infinite_keeps_finite_only() {
        let d = LogProbDistribution::new(vec![0.5f64.ln(), f64::NEG_INFINITY, 0.5f64.ln()]).unwrap();
        let c = filter_delta_margin(&d, f64::INFINITY).unwrap();
        assert_eq!(c.ids(), &[TokenId(0), TokenId(2)]);
    }

    fn members(rows: &[&[f64]]) -> AmateurEnsemble {
        let models: Vec<Arc<dyn LanguageModel>> = rows
            .iter()
            .map(|r| Arc::new(SyntheticTableModel::new(0, dist(r)).unwrap()) as Arc<dyn LanguageModel>)
            .collect();
        AmateurEnsemble::uniform(models, 1.0).unwrap()
    }

    #[test]
    fn joint_retains_low_consensus() {
        // expert survivors at delta=2: ids 0, 1, 2 (id 3 is far below).
        let expert = LogProbDistribution::from_logits(vec![-1.0, -1.2, -1.4, -9.0]).unwrap();
        // top-1 votes: id2 gets all three votes, id1 one vote, id0 none.
        let ens = members(&[
            &[0.1, 0.2, 0.6, 0.1],
            &[0.1, 0.2, 0.6, 0.1],
            &[0.1, 0.2, 0.6, 0.1],
        ]);
        let rule = VoteRule::TopRank { r: 1 };
        let c = filter_joint(&expert, 2.0, &ens, &[], &rule, 0.5, EnsembleMode::Sequential).unwrap();
        assert_eq!(c.ids(), &[TokenId(0), TokenId(1)]);

        let ens = members(&[
            &[0.1, 0.6, 0.2, 0.1],
            &[0.1, 0.2, 0.6, 0.1],
            &[0.1, 0.2, 0.6, 0.1],
        ]);
        // CRs (0, 1/3, 2/3) with cap 0.5: ids 0 and 1 survive
        let c = filter_joint(&expert, 2.0, &ens, &[], &rule, 0.5, EnsembleMode::Sequential).unwrap();
        assert_eq!(c.ids(), &[TokenId(0), TokenId(1)]);
    }

    #[test]
    fn joint_cap_above_one_is_delta_margin() {
        let expert = LogProbDistribution::from_logits(vec![-1.0, -1.2, -1.4, -9.0]).unwrap();
        let ens = members(&[&[0.25, 0.25, 0.25, 0.25]]);
        let rule = VoteRule::TopRank { r: 4 };
        let c = filter_joint(&expert, 2.0, &ens, &[], &rule, 1.0 + 1e-9, EnsembleMode::Sequential).unwrap();
        assert_eq!(c, filter_delta_margin(&expert, 2.0).unwrap());
    }

    #[test]
    fn joint_falls_back_when_all_vetoed() {
        let expert = LogProbDistribution::from_logits(vec![-1.0, -1.2, -9.0]).unwrap();
        let ens = members(&[&[0.4, 0.4, 0.2], &[0.4, 0.4, 0.2]]);
        let rule = VoteRule::TopRank { r: 2 };
        let c = filter_joint(&expert, 1.0, &ens, &[], &rule, 0.5, EnsembleMode::Sequential).unwrap();
        assert_eq!(c, filter_delta_margin(&expert, 1.0).unwrap());
    }
}
