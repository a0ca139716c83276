//! Brute-force re-derivation of contrastive step scores from raw model
//! log-probabilities. Shares no code with the decoder beyond the public
//! parameter types.

use macd::decoding::{FilterSpec, Strategy};
use macd::ensemble::VoteRule;

pub fn lse(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    let s: f64 = xs.iter().map(|x| (x - m).exp()).sum();
    m + s.ln()
}

pub fn temper(lp: &[f64], tau: f64) -> Vec<f64> {
    if tau == 1.0 {
        return lp.to_vec();
    }
    let s: Vec<f64> = lp.iter().map(|x| x / tau).collect();
    let z = lse(&s);
    s.iter().map(|x| x - z).collect()
}

/// Ids by descending log-prob, lower id first on ties.
pub fn ranked(lp: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..lp.len()).collect();
    idx.sort_by(|&a, &b| lp[b].partial_cmp(&lp[a]).unwrap().then(a.cmp(&b)));
    idx
}

fn votes(rule: &VoteRule, amateurs: &[Vec<f64>], id: usize) -> usize {
    amateurs
        .iter()
        .filter(|a| match *rule {
            VoteRule::TopRank { r } => ranked(a).iter().take(r).any(|&t| t == id),
            VoteRule::LogProbThreshold { tau_c } => a[id] > tau_c,
        })
        .count()
}

/// One scored candidate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scored {
    pub id: usize,
    pub expert_lp: f64,
    pub score: f64,
}

/// Candidates and scores of a contrastive strategy. `amateur_raw` are the
/// members' untempered log-probabilities.
pub fn score_step(
    expert: &[f64],
    amateur_raw: &[Vec<f64>],
    taus: &[f64],
    strategy: &Strategy,
    floor: f64,
) -> Vec<Scored> {
    let mut amateurs: Vec<Vec<f64>> = amateur_raw.iter().zip(taus).map(|(a, &t)| temper(a, t)).collect();
    if matches!(strategy, Strategy::Cd { .. }) {
        amateurs.truncate(1);
    }
    let (alpha, filter) = match *strategy {
        Strategy::Cd { alpha, filter } | Strategy::MacdMean { alpha, filter } => (alpha, filter),
        Strategy::MacdConsensus { alpha, filter, .. } => (alpha, filter),
        Strategy::Greedy => (0.0, FilterSpec::TopK { k: 1 }),
        _ => panic!("oracle covers deterministic strategies only"),
    };
    let rule = match *strategy {
        Strategy::MacdConsensus { vote_rule, .. } => vote_rule,
        _ => VoteRule::TopRank { r: 10 },
    };
    let order = ranked(expert);
    let k = amateurs.len();
    let margin = |delta: f64| -> Vec<usize> {
        let best = expert[order[0]];
        order
            .iter()
            .copied()
            .filter(|&i| expert[i] > f64::NEG_INFINITY && expert[i] >= best - delta)
            .collect()
    };
    let cands: Vec<usize> = match filter {
        FilterSpec::TopK { k } => order.iter().copied().take(k).collect(),
        FilterSpec::DeltaMargin { delta } => margin(delta),
        FilterSpec::Joint { delta, cr_cap } => {
            let base = margin(delta);
            let kept: Vec<usize> = base
                .iter()
                .copied()
                .filter(|&i| (votes(&rule, &amateurs, i) as f64 / k as f64) < cr_cap)
                .collect();
            if kept.is_empty() {
                base
            } else {
                kept
            }
        }
    };
    cands
        .into_iter()
        .map(|id| {
            let e = expert[id];
            let score = match strategy {
                Strategy::Greedy => e,
                Strategy::Cd { .. } => e - alpha * amateurs[0][id].max(floor),
                Strategy::MacdMean { .. } => {
                    let mut s = 0.0;
                    for a in &amateurs {
                        s += a[id].max(floor);
                    }
                    e - alpha * (s / k as f64)
                }
                Strategy::MacdConsensus { .. } => e - alpha * (votes(&rule, &amateurs, id) as f64 / k as f64),
                _ => unreachable!(),
            };
            Scored { id, expert_lp: e, score }
        })
        .collect()
}

/// Highest score, then highest expert log-prob, then lowest id.
pub fn best(scored: &[Scored]) -> Scored {
    *scored
        .iter()
        .min_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .unwrap()
                .then(b.expert_lp.partial_cmp(&a.expert_lp).unwrap())
                .then(a.id.cmp(&b.id))
        })
        .expect("non-empty candidate set")
}
