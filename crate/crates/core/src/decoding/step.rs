use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::filter::{filter_delta_margin, filter_topk, restrict_by_consensus, CandidateSet, FilterSpec};
use super::sample::{nucleus_support, sample_from, topk_support, typical_support};
use super::score::{cd_score, macd_consensus_score, macd_mean_score, select_best};
use super::{DecodeConfig, DecodeError, DecodeOutput, DecodeTrace, StepRecord, Strategy};
use crate::ensemble::{
    consensus_ratio, floor_logp, mean_amateur_logp, ratios_from_votes, AmateurEnsemble, AmateurEvaluation,
};
use crate::lm::{apply_temperature, validate_ids, LanguageModel, LogProbDistribution, TokenId};

/// Candidates with their penalties and final scores, before selection.
pub(crate) struct ScoredStep {
    pub candidates: CandidateSet,
    pub penalty: Vec<f64>,
    pub scores: Vec<f64>,
    pub amateur_ns: u64,
}

fn ensemble_for<'a>(
    strategy: &Strategy,
    ensemble: Option<&'a AmateurEnsemble>,
) -> Result<Option<&'a AmateurEnsemble>, DecodeError> {
    if strategy.is_contrastive() {
        ensemble.map(Some).ok_or(DecodeError::MissingEnsemble(strategy.name()))
    } else {
        Ok(None)
    }
}

/// Filters and scores every candidate for a deterministic strategy.
/// `greedy_width` sets how many expert-ranked tokens greedy keeps.
pub(crate) fn score_candidates(
    expert_dist: &LogProbDistribution,
    ensemble: Option<&AmateurEnsemble>,
    context: &[TokenId],
    config: &DecodeConfig,
    greedy_width: usize,
) -> Result<ScoredStep, DecodeError> {
    let strategy = config.strategy;
    let ensemble = ensemble_for(&strategy, ensemble)?;
    let (alpha, filter) = match strategy {
        Strategy::Greedy => {
            let candidates = filter_topk(expert_dist, greedy_width)?;
            let scores = candidates.expert_logp().to_vec();
            return Ok(ScoredStep {
                candidates,
                penalty: Vec::new(),
                scores,
                amateur_ns: 0,
            });
        }
        Strategy::Cd { alpha, filter }
        | Strategy::MacdMean { alpha, filter }
        | Strategy::MacdConsensus { alpha, filter, .. } => (alpha, filter),
        _ => {
            return Err(DecodeError::InvalidParameter(format!(
                "`{}` is sampled, not scored",
                strategy.name()
            )))
        }
    };
    let ensemble = ensemble.expect("contrastive strategies carry an ensemble");

    let amateur_start = Instant::now();
    let dists = match strategy {
        Strategy::Cd { .. } => {
            let first = &ensemble.members()[0];
            let d = first.model.next_logprobs(context)?;
            vec![apply_temperature(&d, first.temperature)?]
        }
        _ => ensemble.member_distributions(context, config.ensemble_mode)?,
    };
    let mut amateur_ns = amateur_start.elapsed().as_nanos() as u64;

    let candidates = match filter {
        FilterSpec::TopK { k } => filter_topk(expert_dist, k)?,
        FilterSpec::DeltaMargin { delta } => filter_delta_margin(expert_dist, delta)?,
        FilterSpec::Joint { delta, cr_cap } => {
            let base = filter_delta_margin(expert_dist, delta)?;
            let t = Instant::now();
            let eval = AmateurEvaluation::from_distributions(&dists, base.ids(), None);
            let ratios = consensus_ratio(&eval, &strategy.vote_rule(), Some(&dists))?;
            amateur_ns += t.elapsed().as_nanos() as u64;
            restrict_by_consensus(&base, &ratios, cr_cap)
        }
    };
    if candidates.is_empty() {
        return Err(DecodeError::EmptyCandidateSet);
    }

    let t = Instant::now();
    let floor = config.logp_floor;
    let expert_lp = candidates.expert_logp();
    let (penalty, scores) = match strategy {
        Strategy::Cd { .. } => {
            let row = &dists[0];
            let penalty: Vec<f64> = candidates
                .ids()
                .iter()
                .map(|&id| floor_logp(row.logp(id), floor))
                .collect();
            let scores = expert_lp
                .iter()
                .zip(&penalty)
                .map(|(&e, &a)| cd_score(e, a, alpha))
                .collect();
            (penalty, scores)
        }
        Strategy::MacdMean { .. } => {
            let eval = AmateurEvaluation::from_distributions(&dists, candidates.ids(), None);
            let penalty = mean_amateur_logp(&eval, floor);
            let mut column = vec![0.0; eval.k()];
            let scores = (0..eval.m())
                .map(|m| {
                    for (slot, row) in column.iter_mut().zip(&eval.per_member_logp) {
                        *slot = floor_logp(row[m], floor);
                    }
                    macd_mean_score(expert_lp[m], &column, alpha)
                })
                .collect();
            (penalty, scores)
        }
        Strategy::MacdConsensus { vote_rule, .. } => {
            let eval = AmateurEvaluation::from_distributions(&dists, candidates.ids(), Some(&vote_rule));
            let votes = eval.votes.as_ref().ok_or_else(|| {
                DecodeError::InvalidParameter(format!("vote rule {vote_rule:?} rejected"))
            })?;
            let penalty = ratios_from_votes(votes, eval.k());
            let scores = expert_lp
                .iter()
                .zip(&penalty)
                .map(|(&e, &cr)| macd_consensus_score(e, cr, alpha))
                .collect::<Result<Vec<_>, _>>()?;
            (penalty, scores)
        }
        _ => unreachable!(),
    };
    amateur_ns += t.elapsed().as_nanos() as u64;

    Ok(ScoredStep {
        candidates,
        penalty,
        scores,
        amateur_ns,
    })
}

/// Runs one step at `context` and returns the emitted token with its record.
///
/// Deterministic strategies take the best-scoring candidate; sampling
/// baselines draw from their truncated, renormalized support using `rng`.
pub fn decode_step<M: LanguageModel + ?Sized, R: Rng + ?Sized>(
    expert: &M,
    ensemble: Option<&AmateurEnsemble>,
    context: &[TokenId],
    config: &DecodeConfig,
    rng: &mut R,
) -> Result<(TokenId, StepRecord), DecodeError> {
    let start = Instant::now();
    let dist = expert.next_logprobs(context)?;
    let strategy = config.strategy;
    let record = if strategy.is_stochastic() {
        let support = match strategy {
            Strategy::TopKSample { k, .. } => topk_support(&dist, k)?,
            Strategy::Nucleus { p, .. } => nucleus_support(&dist, p)?,
            Strategy::Typical { tau_t, .. } => typical_support(&dist, tau_t)?,
            _ => unreachable!(),
        };
        if support.is_empty() {
            return Err(DecodeError::EmptyCandidateSet);
        }
        let chosen = sample_from(&dist, &support, rng);
        let expert_logp: Vec<f64> = support.iter().map(|&id| dist.logp(id)).collect();
        StepRecord {
            position: context.len(),
            scores: expert_logp.clone(),
            candidates: support,
            expert_logp,
            penalty: Vec::new(),
            chosen,
            sampled: true,
            duration_ns: 0,
            amateur_ns: 0,
        }
    } else {
        let scored = score_candidates(&dist, ensemble, context, config, 1)?;
        let best = select_best(scored.candidates.ids(), scored.candidates.expert_logp(), &scored.scores);
        StepRecord {
            position: context.len(),
            chosen: scored.candidates.ids()[best],
            candidates: scored.candidates.ids().to_vec(),
            expert_logp: scored.candidates.expert_logp().to_vec(),
            penalty: scored.penalty,
            scores: scored.scores,
            sampled: false,
            duration_ns: 0,
            amateur_ns: scored.amateur_ns,
        }
    };
    let mut record = record;
    record.duration_ns = start.elapsed().as_nanos() as u64;
    Ok((record.chosen, record))
}

pub(crate) fn check_inputs<M: LanguageModel + ?Sized>(
    expert: &M,
    ensemble: Option<&AmateurEnsemble>,
    prompt: &[TokenId],
    config: &DecodeConfig,
) -> Result<(), DecodeError> {
    config.validate()?;
    if prompt.is_empty() {
        return Err(DecodeError::EmptyPrompt);
    }
    validate_ids(prompt, expert.vocab_size())?;
    if let Some(eos) = config.eos {
        validate_ids(&[eos], expert.vocab_size())?;
    }
    if let Some(ens) = ensemble_for(&config.strategy, ensemble)? {
        ens.check_expert(expert)?;
    }
    Ok(())
}

/// Generates up to `max_new_tokens` tokens after `prompt`, stopping early
/// once `eos` is emitted (the eos token is kept in the output).
pub fn decode<M: LanguageModel + ?Sized>(
    expert: &M,
    ensemble: Option<&AmateurEnsemble>,
    prompt: &[TokenId],
    config: &DecodeConfig,
) -> Result<DecodeOutput, DecodeError> {
    check_inputs(expert, ensemble, prompt, config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.strategy.seed());
    let mut context = prompt.to_vec();
    let mut trace = DecodeTrace::new(config.strategy, prompt.len());
    for _ in 0..config.max_new_tokens {
        let (tok, record) = decode_step(expert, ensemble, &context, config, &mut rng)?;
        trace.steps.push(record);
        context.push(tok);
        if Some(tok) == config.eos {
            break;
        }
    }
    Ok(DecodeOutput {
        tokens: context.split_off(prompt.len()),
        trace,
    })
}
