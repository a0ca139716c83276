//! Candidate filtering, contrastive scoring, baselines, and the
//! autoregressive decode loop.
//!
//! A contrastive step runs in four stages:
//!
//! 1. query the expert for its next-token distribution;
//! 2. keep a plausible candidate set (top-k, delta margin, or joint);
//! 3. score each candidate, `expert_lp - alpha * penalty`, where the
//!    penalty is one amateur's log-prob (CD), the ensemble's mean log-prob,
//!    or the ensemble's consensus ratio;
//! 4. take the best score, breaking ties by higher expert log-prob and then
//!    lower token id.
//!
//! The baselines (greedy, top-k, nucleus, typical) use the expert alone.

mod beam;
mod filter;
mod sample;
mod score;
mod step;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ensemble::{EnsembleError, EnsembleMode, VoteRule, DEFAULT_LOGP_FLOOR};
use crate::lm::{LmError, TokenId, TokenSequence};

pub use beam::decode_beam;
pub use filter::{
    filter_delta_margin, filter_joint, filter_topk, restrict_by_consensus, CandidateSet, FilterSpec,
};
pub use sample::{
    greedy, nucleus_sample, nucleus_support, sample_from, topk_sample, topk_support, typical_sample,
    typical_support,
};
pub use score::{cd_score, macd_consensus_score, macd_mean_score};
pub use step::{decode, decode_step};

/// Bumped whenever the serialized trace layout changes.
pub const TRACE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("k must be >= 1, got {0}")]
    InvalidK(usize),
    #[error("delta must be >= 0, got {0}")]
    NegativeDelta(f64),
    #[error("consensus ratio {0} is outside [0, 1]")]
    CrOutOfRange(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("candidate set is empty")]
    EmptyCandidateSet,
    #[error("prompt is empty")]
    EmptyPrompt,
    #[error("strategy `{0}` needs an amateur ensemble")]
    MissingEnsemble(&'static str),
    #[error(transparent)]
    Lm(#[from] LmError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
}

/// A decoding strategy and its hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Strategy {
    Greedy,
    TopKSample { k: usize, seed: u64 },
    Nucleus { p: f64, seed: u64 },
    Typical { tau_t: f64, seed: u64 },
    /// Single-amateur contrastive decoding against the ensemble's first member.
    Cd { alpha: f64, filter: FilterSpec },
    MacdMean { alpha: f64, filter: FilterSpec },
    MacdConsensus {
        alpha: f64,
        filter: FilterSpec,
        vote_rule: VoteRule,
    },
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Greedy => "greedy",
            Strategy::TopKSample { .. } => "top-k",
            Strategy::Nucleus { .. } => "nucleus",
            Strategy::Typical { .. } => "typical",
            Strategy::Cd { .. } => "cd",
            Strategy::MacdMean { .. } => "macd-mean",
            Strategy::MacdConsensus { .. } => "macd-consensus",
        }
    }

    pub fn is_contrastive(&self) -> bool {
        matches!(
            self,
            Strategy::Cd { .. } | Strategy::MacdMean { .. } | Strategy::MacdConsensus { .. }
        )
    }

    pub fn is_stochastic(&self) -> bool {
        matches!(
            self,
            Strategy::TopKSample { .. } | Strategy::Nucleus { .. } | Strategy::Typical { .. }
        )
    }

    pub fn seed(&self) -> u64 {
        match *self {
            Strategy::TopKSample { seed, .. } | Strategy::Nucleus { seed, .. } | Strategy::Typical { seed, .. } => seed,
            _ => 0,
        }
    }

    pub fn filter(&self) -> Option<FilterSpec> {
        match *self {
            Strategy::Cd { filter, .. } | Strategy::MacdMean { filter, .. } | Strategy::MacdConsensus { filter, .. } => {
                Some(filter)
            }
            _ => None,
        }
    }

    /// The vote rule used by consensus scoring and by joint filtering.
    pub fn vote_rule(&self) -> VoteRule {
        match *self {
            Strategy::MacdConsensus { vote_rule, .. } => vote_rule,
            _ => VoteRule::default(),
        }
    }

    /// Same strategy with its sampling seed replaced; deterministic
    /// strategies are returned unchanged.
    pub fn with_seed(self, seed: u64) -> Self {
        match self {
            Strategy::TopKSample { k, .. } => Strategy::TopKSample { k, seed },
            Strategy::Nucleus { p, .. } => Strategy::Nucleus { p, seed },
            Strategy::Typical { tau_t, .. } => Strategy::Typical { tau_t, seed },
            other => other,
        }
    }

    /// Same strategy with the penalty weight replaced; baselines are
    /// returned unchanged.
    pub fn with_alpha(self, a: f64) -> Self {
        match self {
            Strategy::Cd { filter, .. } => Strategy::Cd { alpha: a, filter },
            Strategy::MacdMean { filter, .. } => Strategy::MacdMean { alpha: a, filter },
            Strategy::MacdConsensus { filter, vote_rule, .. } => Strategy::MacdConsensus {
                alpha: a,
                filter,
                vote_rule,
            },
            other => other,
        }
    }

    pub fn validate(&self) -> Result<(), DecodeError> {
        let bad = |msg: String| Err(DecodeError::InvalidParameter(msg));
        match *self {
            Strategy::Greedy => Ok(()),
            Strategy::TopKSample { k, .. } if k == 0 => Err(DecodeError::InvalidK(0)),
            Strategy::TopKSample { .. } => Ok(()),
            Strategy::Nucleus { p, .. } if !(p > 0.0 && p <= 1.0) => bad(format!("nucleus p must be in (0, 1], got {p}")),
            Strategy::Typical { tau_t, .. } if !(tau_t > 0.0 && tau_t <= 1.0) => {
                bad(format!("typical tau must be in (0, 1], got {tau_t}"))
            }
            Strategy::Nucleus { .. } | Strategy::Typical { .. } => Ok(()),
            Strategy::Cd { alpha, filter } | Strategy::MacdMean { alpha, filter } => {
                check_alpha(alpha)?;
                filter.validate()
            }
            Strategy::MacdConsensus {
                alpha,
                filter,
                vote_rule,
            } => {
                check_alpha(alpha)?;
                vote_rule.validate()?;
                filter.validate()
            }
        }
    }
}

fn check_alpha(alpha: f64) -> Result<(), DecodeError> {
    if alpha >= 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(DecodeError::InvalidParameter(format!(
            "alpha must be finite and >= 0, got {alpha}"
        )))
    }
}

/// Everything a decode run needs besides the models and the prompt.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodeConfig {
    pub strategy: Strategy,
    pub max_new_tokens: usize,
    /// Generation stops right after this token is emitted.
    pub eos: Option<TokenId>,
    pub ensemble_mode: EnsembleMode,
    /// Lower clamp for amateur log-probabilities.
    pub logp_floor: f64,
}

impl DecodeConfig {
    pub fn new(strategy: Strategy, max_new_tokens: usize, eos: Option<TokenId>) -> Self {
        Self {
            strategy,
            max_new_tokens,
            eos,
            ensemble_mode: EnsembleMode::Sequential,
            logp_floor: DEFAULT_LOGP_FLOOR,
        }
    }

    pub fn with_mode(mut self, mode: EnsembleMode) -> Self {
        self.ensemble_mode = mode;
        self
    }

    pub fn with_strategy(mut self, strategy: Strategy) -> Self {
        self.strategy = strategy;
        self
    }

    pub fn validate(&self) -> Result<(), DecodeError> {
        if self.max_new_tokens == 0 {
            return Err(DecodeError::InvalidParameter("max_new_tokens must be >= 1".into()));
        }
        if self.logp_floor.is_nan() || self.logp_floor == f64::INFINITY {
            return Err(DecodeError::InvalidParameter("logp_floor must be a number".into()));
        }
        self.strategy.validate()
    }
}

/// What happened at one decode step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// Absolute position of the emitted token (prompt tokens included).
    pub position: usize,
    pub candidates: Vec<TokenId>,
    pub expert_logp: Vec<f64>,
    /// Mean amateur log-prob (CD, mean) or consensus ratio (consensus);
    /// empty for baselines.
    pub penalty: Vec<f64>,
    pub scores: Vec<f64>,
    pub chosen: TokenId,
    /// True when the token was drawn at random rather than by argmax.
    pub sampled: bool,
    pub duration_ns: u64,
    pub amateur_ns: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeTrace {
    pub schema_version: u32,
    pub strategy: Strategy,
    pub prompt_len: usize,
    pub steps: Vec<StepRecord>,
}

impl DecodeTrace {
    pub fn new(strategy: Strategy, prompt_len: usize) -> Self {
        Self {
            schema_version: TRACE_SCHEMA_VERSION,
            strategy,
            prompt_len,
            steps: Vec::new(),
        }
    }

    /// Sum of the chosen tokens' step scores.
    pub fn cumulative_score(&self) -> f64 {
        self.steps
            .iter()
            .map(|s| {
                let i = s.candidates.iter().position(|c| *c == s.chosen).unwrap();
                s.scores[i]
            })
            .sum()
    }

    pub fn amateur_ns(&self) -> u64 {
        self.steps.iter().map(|s| s.amateur_ns).sum()
    }

    pub fn duration_ns(&self) -> u64 {
        self.steps.iter().map(|s| s.duration_ns).sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace is always serializable")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeOutput {
    /// Generated tokens only, prompt excluded.
    pub tokens: TokenSequence,
    pub trace: DecodeTrace,
}
