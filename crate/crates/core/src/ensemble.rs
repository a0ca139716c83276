//! The amateur ensemble: K models queried on the same prefix, reduced to a
//! per-candidate penalty either by averaging log-probabilities or by
//! counting votes.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lm::{apply_temperature, check_compatible, LanguageModel, LmError, LogProbDistribution, NGramModel, TokenId};

/// Default clamp applied to amateur log-probabilities before they enter a
/// penalty, so that `-inf` never meets arithmetic.
pub const DEFAULT_LOGP_FLOOR: f64 = -30.0;

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("an ensemble needs at least one member")]
    Empty,
    #[error("top-rank voting needs the members' full distributions")]
    MissingFullDistributions,
    #[error("invalid vote rule: {0}")]
    InvalidVoteRule(String),
    #[error("evaluation has {rows} rows but {expected} distributions were supplied")]
    DimensionMismatch { rows: usize, expected: usize },
    #[error("candidate set is empty")]
    NoCandidates,
    #[error("manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Lm(#[from] LmError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Whether members are queried one after another or fanned out over the
/// current rayon pool. Both produce identical results.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnsembleMode {
    #[default]
    Sequential,
    Parallel,
}

impl std::str::FromStr for EnsembleMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sequential" => Ok(Self::Sequential),
            "parallel" => Ok(Self::Parallel),
            other => Err(format!("unknown ensemble mode `{other}`")),
        }
    }
}

/// How a member casts its vote for a candidate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum VoteRule {
    /// Vote iff the candidate is among the member's `r` most probable
    /// tokens over the whole vocabulary (lower id wins ties).
    TopRank { r: usize },
    /// Vote iff the member's log-probability exceeds `tau_c`.
    LogProbThreshold { tau_c: f64 },
}

impl Default for VoteRule {
    fn default() -> Self {
        VoteRule::TopRank { r: 10 }
    }
}

impl VoteRule {
    pub fn validate(&self) -> Result<(), EnsembleError> {
        match *self {
            VoteRule::TopRank { r: 0 } => Err(EnsembleError::InvalidVoteRule("r must be >= 1".into())),
            VoteRule::LogProbThreshold { tau_c } if tau_c.is_nan() => {
                Err(EnsembleError::InvalidVoteRule("tau_c is NaN".into()))
            }
            _ => Ok(()),
        }
    }
}

/// One amateur with its sampling temperature.
#[derive(Clone)]
pub struct Member {
    pub model: Arc<dyn LanguageModel>,
    pub temperature: f64,
    pub label: String,
}

impl std::fmt::Debug for Member {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Member")
            .field("label", &self.label)
            .field("temperature", &self.temperature)
            .field("vocab_size", &self.model.vocab_size())
            .finish()
    }
}

/// An ordered, immutable set of amateur models sharing one vocabulary.
#[derive(Debug, Clone)]
pub struct AmateurEnsemble {
    members: Vec<Member>,
}

/// Amateur log-probabilities for M candidates under K members.
#[derive(Debug, Clone, PartialEq)]
pub struct AmateurEvaluation {
    pub ids: Vec<TokenId>,
    /// `per_member_logp[k][m]`, after member `k`'s temperature.
    pub per_member_logp: Vec<Vec<f64>>,
    /// Per-candidate vote counts, present when a vote rule was requested.
    pub votes: Option<Vec<usize>>,
}

impl AmateurEvaluation {
    pub fn k(&self) -> usize {
        self.per_member_logp.len()
    }

    pub fn m(&self) -> usize {
        self.ids.len()
    }

    /// Gathers the candidate columns out of already-computed member
    /// distributions. Votes are counted when `rule` is given and valid.
    pub fn from_distributions(
        dists: &[LogProbDistribution],
        candidates: &[TokenId],
        rule: Option<&VoteRule>,
    ) -> Self {
        let per_member_logp = dists
            .iter()
            .map(|d| candidates.iter().map(|&id| d.logp(id)).collect())
            .collect();
        let mut eval = AmateurEvaluation {
            ids: candidates.to_vec(),
            per_member_logp,
            votes: None,
        };
        if let Some(rule) = rule {
            eval.votes = count_votes(&eval, rule, Some(dists)).ok();
        }
        eval
    }
}

impl AmateurEnsemble {
    pub fn new(members: Vec<Member>) -> Result<Self, EnsembleError> {
        let first = members.first().ok_or(EnsembleError::Empty)?;
        for m in &members[1..] {
            check_compatible(first.model.as_ref(), m.model.as_ref())?;
        }
        for m in &members {
            if !(m.temperature > 0.0 && m.temperature.is_finite()) {
                return Err(LmError::NonPositiveTemperature(m.temperature).into());
            }
        }
        Ok(Self { members })
    }

    /// Convenience constructor: every model at the same temperature.
    pub fn uniform<I>(models: I, temperature: f64) -> Result<Self, EnsembleError>
    where
        I: IntoIterator<Item = Arc<dyn LanguageModel>>,
    {
        Self::new(
            models
                .into_iter()
                .enumerate()
                .map(|(i, model)| Member {
                    model,
                    temperature,
                    label: format!("amateur-{i}"),
                })
                .collect(),
        )
    }

    pub fn k(&self) -> usize {
        self.members.len()
    }

    pub fn members(&self) -> &[Member] {
        &self.members
    }

    pub fn vocab_size(&self) -> usize {
        self.members[0].model.vocab_size()
    }

    /// The first `k` members as a new ensemble.
    pub fn prefix(&self, k: usize) -> Result<Self, EnsembleError> {
        Self::new(self.members.iter().take(k).cloned().collect())
    }

    /// Checks that `expert` shares this ensemble's vocabulary.
    pub fn check_expert<M: LanguageModel + ?Sized>(&self, expert: &M) -> Result<(), EnsembleError> {
        check_compatible(expert, self.members[0].model.as_ref())?;
        Ok(())
    }

    /// Each member's full next-token distribution after its temperature, in
    /// member order.
    pub fn member_distributions(
        &self,
        context: &[TokenId],
        mode: EnsembleMode,
    ) -> Result<Vec<LogProbDistribution>, EnsembleError> {
        let query = |m: &Member| -> Result<LogProbDistribution, EnsembleError> {
            let d = m.model.next_logprobs(context)?;
            Ok(apply_temperature(&d, m.temperature)?)
        };
        match mode {
            EnsembleMode::Sequential => self.members.iter().map(query).collect(),
            EnsembleMode::Parallel => self.members.par_iter().map(query).collect(),
        }
    }

    /// Evaluates every member on `candidates`, and counts votes when `rule`
    /// is given.
    pub fn evaluate_candidates(
        &self,
        context: &[TokenId],
        candidates: &[TokenId],
        mode: EnsembleMode,
        rule: Option<&VoteRule>,
    ) -> Result<AmateurEvaluation, EnsembleError> {
        Ok(self.evaluate_with_distributions(context, candidates, mode, rule)?.0)
    }

    /// Like [`evaluate_candidates`](Self::evaluate_candidates) but also
    /// returns the full member distributions.
    pub fn evaluate_with_distributions(
        &self,
        context: &[TokenId],
        candidates: &[TokenId],
        mode: EnsembleMode,
        rule: Option<&VoteRule>,
    ) -> Result<(AmateurEvaluation, Vec<LogProbDistribution>), EnsembleError> {
        if candidates.is_empty() {
            return Err(EnsembleError::NoCandidates);
        }
        crate::lm::validate_ids(candidates, self.vocab_size())?;
        if let Some(rule) = rule {
            rule.validate()?;
        }
        let dists = self.member_distributions(context, mode)?;
        let eval = AmateurEvaluation::from_distributions(&dists, candidates, rule);
        Ok((eval, dists))
    }
}

/// Per-candidate count of members whose indicator fires under `rule`.
pub fn count_votes(
    eval: &AmateurEvaluation,
    rule: &VoteRule,
    full_dists: Option<&[LogProbDistribution]>,
) -> Result<Vec<usize>, EnsembleError> {
    rule.validate()?;
    let mut votes = vec![0usize; eval.m()];
    match *rule {
        VoteRule::TopRank { r } => {
            let dists = full_dists.ok_or(EnsembleError::MissingFullDistributions)?;
            if dists.len() != eval.k() {
                return Err(EnsembleError::DimensionMismatch {
                    rows: eval.k(),
                    expected: dists.len(),
                });
            }
            for d in dists {
                let top = d.top_r(r);
                for (v, id) in votes.iter_mut().zip(&eval.ids) {
                    if top.contains(id) {
                        *v += 1;
                    }
                }
            }
        }
        VoteRule::LogProbThreshold { tau_c } => {
            for row in &eval.per_member_logp {
                for (v, &lp) in votes.iter_mut().zip(row) {
                    if lp > tau_c {
                        *v += 1;
                    }
                }
            }
        }
    }
    Ok(votes)
}

/// Fraction of members voting for each candidate; always `v / K` exactly.
pub fn consensus_ratio(
    eval: &AmateurEvaluation,
    rule: &VoteRule,
    full_dists: Option<&[LogProbDistribution]>,
) -> Result<Vec<f64>, EnsembleError> {
    let k = eval.k() as f64;
    Ok(count_votes(eval, rule, full_dists)?
        .into_iter()
        .map(|v| v as f64 / k)
        .collect())
}

/// Converts an evaluation's stored votes into ratios.
pub fn ratios_from_votes(votes: &[usize], k: usize) -> Vec<f64> {
    votes.iter().map(|&v| v as f64 / k as f64).collect()
}

/// Clamps a log-probability from below.
#[inline]
pub fn floor_logp(lp: f64, floor: f64) -> f64 {
    lp.max(floor)
}

/// Per-candidate mean of the floored member log-probabilities, summed in
/// member order.
pub fn mean_amateur_logp(eval: &AmateurEvaluation, floor: f64) -> Vec<f64> {
    let k = eval.k() as f64;
    (0..eval.m())
        .map(|m| {
            let mut sum = 0.0;
            for row in &eval.per_member_logp {
                sum += floor_logp(row[m], floor);
            }
            sum / k
        })
        .collect()
}

/// On-disk description of an ensemble: model files with temperatures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleManifest {
    /// Expert model file, when the manifest also names one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expert: Option<PathBuf>,
    #[serde(rename = "member")]
    pub members: Vec<ManifestMember>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestMember {
    pub path: PathBuf,
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl EnsembleManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, EnsembleError> {
        let text = fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| EnsembleError::Manifest(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), EnsembleError> {
        let text = toml::to_string(self).map_err(|e| EnsembleError::Manifest(e.to_string()))?;
        fs::write(path, text)?;
        Ok(())
    }

    /// Loads every member's n-gram file, resolving relative paths against
    /// `base`.
    pub fn load_ngram_members(&self, base: &Path) -> Result<AmateurEnsemble, EnsembleError> {
        let members = self
            .members
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let model = NGramModel::load(base.join(&m.path))?;
                Ok(Member {
                    model: Arc::new(model),
                    temperature: m.temperature,
                    label: m.label.clone().unwrap_or_else(|| format!("amateur-{i}")),
                })
            })
            .collect::<Result<Vec<_>, EnsembleError>>()?;
        AmateurEnsemble::new(members)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::SyntheticTableModel;

    fn table(probs: &[f64]) -> Arc<dyn LanguageModel> {
        Arc::new(SyntheticTableModel::new(0, LogProbDistribution::from_probs(probs).unwrap()).unwrap())
    }

    fn ens(models: Vec<Arc<dyn LanguageModel>>) -> AmateurEnsemble {
        AmateurEnsemble::uniform(models, 1.0).unwrap()
    }

    #[test]
    fn single_member_matrix_is_its_logprobs() {
        let d = LogProbDistribution::from_probs(&[0.1, 0.2, 0.3, 0.4]).unwrap();
        let e = ens(vec![table(&[0.1, 0.2, 0.3, 0.4])]);
        let ids = [TokenId(3), TokenId(1)];
        let ev = e.evaluate_candidates(&[], &ids, EnsembleMode::Sequential, None).unwrap();
        assert_eq!(ev.per_member_logp, vec![vec![d.logp(TokenId(3)), d.logp(TokenId(1))]]);
        assert_eq!(mean_amateur_logp(&ev, DEFAULT_LOGP_FLOOR), ev.per_member_logp[0]);
    }

    #[test]
    fn identical_members_give_identical_rows() {
        let e = ens(vec![table(&[0.5, 0.25, 0.25]), table(&[0.5, 0.25, 0.25])]);
        let ev = e
            .evaluate_candidates(&[], &[TokenId(0), TokenId(2)], EnsembleMode::Parallel, None)
            .unwrap();
        assert_eq!(ev.per_member_logp[0], ev.per_member_logp[1]);
        assert_eq!(mean_amateur_logp(&ev, DEFAULT_LOGP_FLOOR), ev.per_member_logp[0]);
    }

    #[test]
    fn three_by_four_table_lookup() {
        let rows = [
            [0.1, 0.2, 0.3, 0.4, 0.0],
            [0.4, 0.3, 0.2, 0.05, 0.05],
            [0.2, 0.2, 0.2, 0.2, 0.2],
        ];
        let e = ens(rows.iter().map(|r| table(r)).collect());
        let ids = [0, 1, 2, 3].map(TokenId);
        let ev = e.evaluate_candidates(&[], &ids, EnsembleMode::Sequential, None).unwrap();
        assert_eq!(ev.k(), 3);
        assert_eq!(ev.m(), 4);
        for (k, row) in rows.iter().enumerate() {
            let total: f64 = row.iter().sum();
            for m in 0..4 {
                let expect = (row[m] / total).ln();
                assert!((ev.per_member_logp[k][m] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mean_hand_arithmetic_and_floor() {
        let ev = AmateurEvaluation {
            ids: vec![TokenId(0), TokenId(1)],
            per_member_logp: vec![vec![-2.0, f64::NEG_INFINITY], vec![-4.0, -1.0]],
            votes: None,
        };
        let mean = mean_amateur_logp(&ev, -30.0);
        assert_eq!(mean[0], -3.0);
        assert_eq!(mean[1], -15.5);
    }

    #[test]
    fn two_of_three_top_rank_votes() {
        // token 0 is top-1 for members 0 and 1 only
        let e = ens(vec![
            table(&[0.6, 0.3, 0.1]),
            table(&[0.5, 0.1, 0.4]),
            table(&[0.1, 0.6, 0.3]),
        ]);
        let rule = VoteRule::TopRank { r: 1 };
        let (ev, dists) = e
            .evaluate_with_distributions(&[], &[TokenId(0), TokenId(2)], EnsembleMode::Sequential, Some(&rule))
            .unwrap();
        let cr = consensus_ratio(&ev, &rule, Some(&dists)).unwrap();
        assert!((cr[0] - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(cr[1], 0.0);
        assert_eq!(ev.votes, Some(vec![2, 0]));
    }

    #[test]
    fn single_member_argmax_top1_is_full_consensus() {
        let e = ens(vec![table(&[0.2, 0.7, 0.1])]);
        let rule = VoteRule::TopRank { r: 1 };
        let (ev, dists) = e
            .evaluate_with_distributions(&[], &[TokenId(1)], EnsembleMode::Sequential, Some(&rule))
            .unwrap();
        assert_eq!(consensus_ratio(&ev, &rule, Some(&dists)).unwrap(), vec![1.0]);
    }

    #[test]
    fn top_rank_requires_full_distributions() {
        let ev = AmateurEvaluation {
            ids: vec![TokenId(0)],
            per_member_logp: vec![vec![-1.0]],
            votes: None,
        };
        assert!(matches!(
            consensus_ratio(&ev, &VoteRule::TopRank { r: 2 }, None),
            Err(EnsembleError::MissingFullDistributions)
        ));
        let cr = consensus_ratio(&ev, &VoteRule::LogProbThreshold { tau_c: -2.0 }, None).unwrap();
        assert_eq!(cr, vec![1.0]);
    }

    #[test]
    fn threshold_is_strict() {
        let ev = AmateurEvaluation {
            ids: vec![TokenId(0)],
            per_member_logp: vec![vec![-1.0], vec![-0.5]],
            votes: None,
        };
        let cr = consensus_ratio(&ev, &VoteRule::LogProbThreshold { tau_c: -1.0 }, None).unwrap();
        assert_eq!(cr, vec![0.5]);
    }

    #[test]
    fn invalid_inputs() {
        assert!(matches!(AmateurEnsemble::new(vec![]), Err(EnsembleError::Empty)));
        assert!(AmateurEnsemble::uniform(vec![table(&[0.5, 0.5]), table(&[0.3, 0.3, 0.4])], 1.0).is_err());
        assert!(AmateurEnsemble::uniform(vec![table(&[0.5, 0.5])], 0.0).is_err());
        assert!(VoteRule::TopRank { r: 0 }.validate().is_err());
    }

    #[test]
    fn temperature_applied_per_member() {
        let m = table(&[0.8, 0.2]);
        let e = AmateurEnsemble::new(vec![Member {
            model: m,
            temperature: 0.5,
            label: "x".into(),
        }])
        .unwrap();
        let ev = e.evaluate_candidates(&[], &[TokenId(0)], EnsembleMode::Sequential, None).unwrap();
        assert!((ev.per_member_logp[0][0] - (0.64f64 / 0.68).ln()).abs() < 1e-12);
    }

    #[test]
    fn manifest_roundtrip() {
        let m = EnsembleManifest {
            expert: Some("expert.ngram".into()),
            members: vec![
                ManifestMember {
                    path: "a.ngram".into(),
                    temperature: 0.5,
                    label: Some("informal-biased".into()),
                },
                ManifestMember {
                    path: "b.ngram".into(),
                    temperature: 1.0,
                    label: None,
                },
            ],
        };
        let text = toml::to_string(&m).unwrap();
        let back: EnsembleManifest = toml::from_str(&text).unwrap();
        assert_eq!(m, back);
    }
}
