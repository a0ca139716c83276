use std::collections::HashMap;

use super::{validate_ids, LanguageModel, LmError, LogProbDistribution, TokenId};

/// A model defined entirely by a lookup table keyed on the trailing
/// `window` tokens of the context.
///
/// Contexts shorter than the window are looked up as-is, so an empty key
/// holds the start-of-sequence distribution. Anything unmapped gets the
/// default distribution.
#[derive(Debug, Clone)]
pub struct SyntheticTableModel {
    window: usize,
    vocab_size: usize,
    table: HashMap<Vec<TokenId>, LogProbDistribution>,
    default: LogProbDistribution,
}

impl SyntheticTableModel {
    pub fn new(window: usize, default: LogProbDistribution) -> Result<Self, LmError> {
        let lse = default.logsumexp();
        if lse.abs() > super::NORMALIZATION_TOL {
            return Err(LmError::NotNormalized(lse));
        }
        Ok(Self {
            window,
            vocab_size: default.len(),
            table: HashMap::new(),
            default,
        })
    }

    /// Stores `dist` for `context`. The key is truncated to the window.
    pub fn insert(&mut self, context: &[TokenId], dist: LogProbDistribution) -> Result<(), LmError> {
        if dist.len() != self.vocab_size {
            return Err(LmError::VocabularyDiffers(dist.len(), self.vocab_size));
        }
        let lse = dist.logsumexp();
        if lse.abs() > super::NORMALIZATION_TOL {
            return Err(LmError::NotNormalized(lse));
        }
        validate_ids(context, self.vocab_size)?;
        self.table.insert(self.key(context).to_vec(), dist);
        Ok(())
    }

    pub fn with_entry(mut self, context: &[TokenId], dist: LogProbDistribution) -> Result<Self, LmError> {
        self.insert(context, dist)?;
        Ok(self)
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn default_distribution(&self) -> &LogProbDistribution {
        &self.default
    }

    fn key<'a>(&self, context: &'a [TokenId]) -> &'a [TokenId] {
        &context[context.len().saturating_sub(self.window)..]
    }
}

impl LanguageModel for SyntheticTableModel {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn next_logprobs(&self, context: &[TokenId]) -> Result<LogProbDistribution, LmError> {
        validate_ids(context, self.vocab_size)?;
        Ok(self
            .table
            .get(self.key(context))
            .unwrap_or(&self.default)
            .clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stored_entry_returned_exactly() {
        let d = LogProbDistribution::from_probs(&[0.7, 0.2, 0.1]).unwrap();
        let m = SyntheticTableModel::new(1, LogProbDistribution::uniform(3))
            .unwrap()
            .with_entry(&[TokenId(2)], d.clone())
            .unwrap();
        assert_eq!(m.next_logprobs(&[TokenId(0), TokenId(2)]).unwrap(), d);
    }

    #[test]
    fn unmapped_context_gets_default() {
        let m = SyntheticTableModel::new(2, LogProbDistribution::uniform(3)).unwrap();
        assert_eq!(
            m.next_logprobs(&[TokenId(1)]).unwrap(),
            LogProbDistribution::uniform(3)
        );
    }

    #[test]
    fn rejects_wrong_size_and_bad_context() {
        let mut m = SyntheticTableModel::new(1, LogProbDistribution::uniform(3)).unwrap();
        assert!(m.insert(&[], LogProbDistribution::uniform(4)).is_err());
        assert!(m.next_logprobs(&[TokenId(3)]).is_err());
    }
}
