//! Experiment runner: trains the n-gram zoo, runs strategy grids over prompt
//! sets and writes reports.
//!
//! Every command is a plain function over an [`ExperimentConfig`]; the `macd`
//! binary only parses flags and prints. Failures carry a stable
//! machine-readable [`HarnessError::code`].

mod config;
pub mod corpus;
mod run;
pub mod synth;
mod zoo;

use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::decoding::DecodeError;
use crate::ensemble::EnsembleError;
use crate::lm::LmError;
use crate::metrics::MetricsError;

pub use config::{
    parse_vote_rule, AblationConfig, AmateurSpec, BenchmarkConfig, CorpusConfig, DecodingConfig, ExperimentConfig,
    ModelSpec, Overrides, STRATEGY_NAMES,
};
pub use run::{
    cmd_ablate, cmd_benchmark, cmd_decode, cmd_evaluate, cmd_train, AblationReport, AblationRow, BenchmarkReport,
    BenchmarkRow, CellRecord, DecodeResult, EvaluationReport, RunArtifact, TrainSummary, MIN_BENCHMARK_PROMPTS,
    MIN_EVAL_PROMPTS,
};
pub use zoo::{load_prompts, Zoo};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corpus too small: {0}")]
    CorpusTooSmall(String),
    #[error("model file not found: {0}")]
    ModelNotFound(PathBuf),
    #[error("vocabulary mismatch: {0}")]
    VocabMismatch(String),
    #[error("need {need} trained amateurs, found {found}")]
    InsufficientAmateurs { need: usize, found: usize },
    #[error("domain `{domain}` has {found} usable prompts, need {need}")]
    InsufficientPrompts { domain: String, need: usize, found: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Lm(LmError),
    #[error(transparent)]
    Ensemble(EnsembleError),
    #[error(transparent)]
    Decode(DecodeError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

impl HarnessError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Stable identifier for scripts.
    pub fn code(&self) -> &'static str {
        match self {
            HarnessError::Config(_) => "config",
            HarnessError::Io { .. } => "io",
            HarnessError::CorpusTooSmall(_) => "corpus_too_small",
            HarnessError::ModelNotFound(_) => "model_not_found",
            HarnessError::VocabMismatch(_) => "vocab_mismatch",
            HarnessError::InsufficientAmateurs { .. } => "insufficient_amateurs",
            HarnessError::InsufficientPrompts { .. } => "insufficient_prompts",
            HarnessError::InvalidArgument(_) => "invalid_argument",
            HarnessError::Lm(_) => "model",
            HarnessError::Ensemble(_) => "ensemble",
            HarnessError::Decode(_) => "decode",
            HarnessError::Metrics(_) => "metrics",
        }
    }

    /// Process exit status: 2 for bad input, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::InvalidArgument(_) => 2,
            _ => 1,
        }
    }

    /// One-line JSON object `{"error": code, "message": text}`.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Wire<'a> {
            error: &'a str,
            message: String,
        }
        serde_json::to_string(&Wire {
            error: self.code(),
            message: self.to_string(),
        })
        .expect("error report is serializable")
    }
}

impl From<LmError> for HarnessError {
    fn from(e: LmError) -> Self {
        match e {
            LmError::EmptyCorpus | LmError::CorpusTooSmall { .. } => HarnessError::CorpusTooSmall(e.to_string()),
            LmError::VocabMismatch { .. } | LmError::VocabularyDiffers(..) => HarnessError::VocabMismatch(e.to_string()),
            other => HarnessError::Lm(other),
        }
    }
}

impl From<EnsembleError> for HarnessError {
    fn from(e: EnsembleError) -> Self {
        match e {
            EnsembleError::Lm(inner) => inner.into(),
            other => HarnessError::Ensemble(other),
        }
    }
}

impl From<DecodeError> for HarnessError {
    fn from(e: DecodeError) -> Self {
        match e {
            DecodeError::Lm(inner) => inner.into(),
            DecodeError::Ensemble(inner) => inner.into(),
            other => HarnessError::Decode(other),
        }
    }
}
