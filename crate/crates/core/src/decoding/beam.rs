use std::cmp::Ordering;
use std::time::Instant;

use super::step::{check_inputs, score_candidates, ScoredStep};
use super::{DecodeConfig, DecodeError, DecodeOutput, DecodeTrace, StepRecord};
use crate::ensemble::AmateurEnsemble;
use crate::lm::{LanguageModel, TokenId};

#[derive(Clone)]
struct Hypothesis {
    tokens: Vec<TokenId>,
    score: f64,
    finished: bool,
    steps: Vec<StepRecord>,
}

/// A child not yet materialized. Ranked by cumulative score, then the
/// step's score, expert log-prob and token id, then the parent's rank.
struct Ranked {
    score: f64,
    step_score: f64,
    expert_lp: f64,
    token: TokenId,
    parent: usize,
    /// Index into the parent's scored candidates; `None` carries a
    /// finished parent over unchanged.
    child: Option<usize>,
}

fn rank(a: &Ranked, b: &Ranked) -> Ordering {
    let desc = |x: f64, y: f64| y.partial_cmp(&x).unwrap_or(Ordering::Equal);
    desc(a.score, b.score)
        .then_with(|| desc(a.step_score, b.step_score))
        .then_with(|| desc(a.expert_lp, b.expert_lp))
        .then_with(|| a.token.cmp(&b.token))
        .then_with(|| a.parent.cmp(&b.parent))
}

/// Beam search over cumulative step scores.
///
/// Each live hypothesis is expanded with its own filtered candidate set and
/// the strategy's per-step score. Hypotheses that emit `eos` stay in the
/// beam and keep competing on their final score. Width 1 reproduces
/// [`decode`](super::decode) token for token. Sampling strategies are
/// rejected; greedy expands the `beam_width` most probable expert tokens.
pub fn decode_beam<M: LanguageModel + ?Sized>(
    expert: &M,
    ensemble: Option<&AmateurEnsemble>,
    prompt: &[TokenId],
    config: &DecodeConfig,
    beam_width: usize,
) -> Result<DecodeOutput, DecodeError> {
    check_inputs(expert, ensemble, prompt, config)?;
    if beam_width == 0 {
        return Err(DecodeError::InvalidParameter("beam width must be >= 1".into()));
    }
    if config.strategy.is_stochastic() {
        return Err(DecodeError::InvalidParameter(format!(
            "beam search does not apply to `{}`",
            config.strategy.name()
        )));
    }

    let mut beams = vec![Hypothesis {
        tokens: Vec::new(),
        score: 0.0,
        finished: false,
        steps: Vec::new(),
    }];
    let mut context = prompt.to_vec();
    for _ in 0..config.max_new_tokens {
        if beams.iter().all(|h| h.finished) {
            break;
        }
        let mut pool: Vec<Ranked> = Vec::new();
        let mut expansions: Vec<Option<(ScoredStep, usize, u64)>> = Vec::with_capacity(beams.len());
        for (parent, hyp) in beams.iter().enumerate() {
            if hyp.finished {
                pool.push(Ranked {
                    score: hyp.score,
                    step_score: f64::NEG_INFINITY,
                    expert_lp: f64::NEG_INFINITY,
                    token: TokenId(u32::MAX),
                    parent,
                    child: None,
                });
                expansions.push(None);
                continue;
            }
            let start = Instant::now();
            context.truncate(prompt.len());
            context.extend_from_slice(&hyp.tokens);
            let dist = expert.next_logprobs(&context)?;
            let scored = score_candidates(&dist, ensemble, &context, config, beam_width)?;
            let duration_ns = start.elapsed().as_nanos() as u64;
            for (j, (&tok, &e)) in scored
                .candidates
                .ids()
                .iter()
                .zip(scored.candidates.expert_logp())
                .enumerate()
            {
                pool.push(Ranked {
                    score: hyp.score + scored.scores[j],
                    step_score: scored.scores[j],
                    expert_lp: e,
                    token: tok,
                    parent,
                    child: Some(j),
                });
            }
            expansions.push(Some((scored, context.len(), duration_ns)));
        }
        pool.sort_by(rank);
        pool.truncate(beam_width);
        beams = pool
            .into_iter()
            .map(|r| {
                let mut hyp = beams[r.parent].clone();
                if let (Some(j), Some((scored, position, duration_ns))) = (r.child, &expansions[r.parent]) {
                    hyp.tokens.push(r.token);
                    hyp.score = r.score;
                    hyp.finished = Some(r.token) == config.eos;
                    hyp.steps.push(StepRecord {
                        position: *position,
                        candidates: scored.candidates.ids().to_vec(),
                        expert_logp: scored.candidates.expert_logp().to_vec(),
                        penalty: scored.penalty.clone(),
                        scores: scored.scores.clone(),
                        chosen: scored.candidates.ids()[j],
                        sampled: false,
                        duration_ns: *duration_ns,
                        amateur_ns: scored.amateur_ns,
                    });
                }
                hyp
            })
            .collect();
    }

    let best = beams.swap_remove(0);
    let mut trace = DecodeTrace::new(config.strategy, prompt.len());
    trace.steps = best.steps;
    Ok(DecodeOutput {
        tokens: best.tokens,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoding::{decode, FilterSpec, Strategy};
    use crate::lm::{LogProbDistribution, SyntheticTableModel};
    use std::sync::Arc;

    fn d(p: &[f64]) -> LogProbDistribution {
        LogProbDistribution::from_probs(p).unwrap()
    }

    #[test]
    fn width_one_equals_decode() {
        let expert = SyntheticTableModel::new(1, d(&[0.3, 0.3, 0.2, 0.2]))
            .unwrap()
            .with_entry(&[TokenId(0)], d(&[0.1, 0.5, 0.2, 0.2]))
            .unwrap()
            .with_entry(&[TokenId(1)], d(&[0.4, 0.1, 0.4, 0.1]))
            .unwrap();
        let am: Arc<dyn LanguageModel> = Arc::new(SyntheticTableModel::new(1, d(&[0.4, 0.3, 0.2, 0.1])).unwrap());
        let ens = AmateurEnsemble::uniform([am], 0.5).unwrap();
        for s in [
            Strategy::Greedy,
            Strategy::Cd { alpha: 0.3, filter: FilterSpec::TopK { k: 3 } },
            Strategy::MacdMean { alpha: 0.3, filter: FilterSpec::DeltaMargin { delta: 1.5 } },
        ] {
            let cfg = DecodeConfig::new(s, 8, Some(TokenId(3)));
            let a = decode(&expert, Some(&ens), &[TokenId(2)], &cfg).unwrap();
            let b = decode_beam(&expert, Some(&ens), &[TokenId(2)], &cfg, 1).unwrap();
            assert_eq!(a.tokens, b.tokens);
            assert_eq!(a.trace.cumulative_score(), b.trace.cumulative_score());
        }
    }

    #[test]
    fn delayed_reward_is_found_with_width_two() {
        // From the neutral prompt token 2, greedy takes 0 (0.55) and then
        // faces a coin flip; 1 -> 1 scores ln 0.45 + ln 0.95 > ln 0.55 + ln 0.5.
        let expert = SyntheticTableModel::new(1, d(&[0.55, 0.45, 0.0]))
            .unwrap()
            .with_entry(&[TokenId(0)], d(&[0.5, 0.5, 0.0]))
            .unwrap()
            .with_entry(&[TokenId(1)], d(&[0.05, 0.95, 0.0]))
            .unwrap();
        let cfg = DecodeConfig::new(Strategy::Greedy, 2, None);
        let g = decode(&expert, None, &[TokenId(2)], &cfg).unwrap();
        assert_eq!(g.tokens, vec![TokenId(0), TokenId(0)]);
        let b = decode_beam(&expert, None, &[TokenId(2)], &cfg, 2).unwrap();
        assert_eq!(b.tokens, vec![TokenId(1), TokenId(1)]);
        assert!(b.trace.cumulative_score() > g.trace.cumulative_score());
    }

    #[test]
    fn stochastic_rejected() {
        let expert = SyntheticTableModel::new(0, d(&[0.5, 0.5])).unwrap();
        let cfg = DecodeConfig::new(Strategy::Nucleus { p: 0.9, seed: 0 }, 2, None);
        assert!(decode_beam(&expert, None, &[TokenId(0)], &cfg, 2).is_err());
        let cfg = DecodeConfig::new(Strategy::Greedy, 2, None);
        assert!(decode_beam(&expert, None, &[TokenId(0)], &cfg, 0).is_err());
    }
}
