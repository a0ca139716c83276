//! Tokenization, the conditional language-model contract, and the n-gram and
//! fixed-table backends behind it.
//!
//! Everything here works in natural-log space. A model answers one question:
//! given a prefix, what is the log-probability of every vocabulary entry
//! as the next token.

mod dist;
mod ngram;
mod table;
mod vocab;

use thiserror::Error;

pub use dist::{apply_temperature, logsumexp, LogProbDistribution, NORMALIZATION_TOL};
pub(crate) use dist::rank_order;
pub use ngram::{train_ngram, NGramModel, Smoothing, NGRAM_FORMAT_VERSION};
pub use table::SyntheticTableModel;
pub use vocab::{build_vocab, tokenize, TokenId, TokenSequence, Vocabulary, BOS, EOS, UNK};
pub(crate) use vocab::validate_ids;

#[derive(Debug, Error)]
pub enum LmError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("corpus has {found} tokens, order {order} needs at least {order}")]
    CorpusTooSmall { found: usize, order: usize },
    #[error("n-gram order must be >= 1, got {0}")]
    InvalidOrder(usize),
    #[error("invalid smoothing parameter: {0}")]
    InvalidSmoothing(String),
    #[error("token id {id} is outside a vocabulary of size {vocab_size}")]
    VocabMismatch { id: TokenId, vocab_size: usize },
    #[error("models disagree on vocabulary ({0} vs {1} entries)")]
    VocabularyDiffers(usize, usize),
    #[error("temperature must be positive and finite, got {0}")]
    NonPositiveTemperature(f64),
    #[error("distribution is not normalized (logsumexp = {0})")]
    NotNormalized(f64),
    #[error("distribution contains NaN or +inf")]
    InvalidLogProb,
    #[error("distribution is empty")]
    EmptyDistribution,
    #[error("sequence is empty")]
    EmptySequence,
    #[error("token {0:?} contains whitespace or is empty")]
    InvalidToken(String),
    #[error("token {0:?} appears twice")]
    DuplicateToken(String),
    #[error("malformed model file at line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// An autoregressive conditional language model.
///
/// Implementations are immutable after construction and may be queried from
/// many threads at once. Identical contexts must produce bitwise-identical
/// distributions.
pub trait LanguageModel: Send + Sync {
    fn vocab_size(&self) -> usize;

    /// Next-token distribution given the full prefix.
    fn next_logprobs(&self, context: &[TokenId]) -> Result<LogProbDistribution, LmError>;

    /// The vocabulary backing this model, when it carries one.
    fn vocabulary(&self) -> Option<&Vocabulary> {
        None
    }
}

impl<M: LanguageModel + ?Sized> LanguageModel for std::sync::Arc<M> {
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }
    fn next_logprobs(&self, context: &[TokenId]) -> Result<LogProbDistribution, LmError> {
        (**self).next_logprobs(context)
    }
    fn vocabulary(&self) -> Option<&Vocabulary> {
        (**self).vocabulary()
    }
}

impl<M: LanguageModel + ?Sized> LanguageModel for &M {
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }
    fn next_logprobs(&self, context: &[TokenId]) -> Result<LogProbDistribution, LmError> {
        (**self).next_logprobs(context)
    }
    fn vocabulary(&self) -> Option<&Vocabulary> {
        (**self).vocabulary()
    }
}

/// Free-function form of [`LanguageModel::next_logprobs`].
pub fn next_logprobs<M: LanguageModel + ?Sized>(
    model: &M,
    context: &[TokenId],
) -> Result<LogProbDistribution, LmError> {
    model.next_logprobs(context)
}

/// Checks that two models can be compared token-for-token.
pub fn check_compatible<A, B>(a: &A, b: &B) -> Result<(), LmError>
where
    A: LanguageModel + ?Sized,
    B: LanguageModel + ?Sized,
{
    if a.vocab_size() != b.vocab_size() {
        return Err(LmError::VocabularyDiffers(a.vocab_size(), b.vocab_size()));
    }
    if let (Some(va), Some(vb)) = (a.vocabulary(), b.vocabulary()) {
        if va != vb {
            return Err(LmError::VocabularyDiffers(va.len(), vb.len()));
        }
    }
    Ok(())
}

/// `sum_t log P(x_t | x_<t)` over the whole sequence, starting from the
/// empty context.
pub fn sequence_logprob<M: LanguageModel + ?Sized>(model: &M, seq: &[TokenId]) -> Result<f64, LmError> {
    if seq.is_empty() {
        return Err(LmError::EmptySequence);
    }
    conditional_logprob(model, &[], seq)
}

/// Log-probability of `continuation` given `prefix`.
pub fn conditional_logprob<M: LanguageModel + ?Sized>(
    model: &M,
    prefix: &[TokenId],
    continuation: &[TokenId],
) -> Result<f64, LmError> {
    validate_ids(prefix, model.vocab_size())?;
    validate_ids(continuation, model.vocab_size())?;
    let mut ctx: Vec<TokenId> = prefix.to_vec();
    let mut total = 0.0;
    for &tok in continuation {
        total += model.next_logprobs(&ctx)?.logp(tok);
        ctx.push(tok);
    }
    Ok(total)
}
