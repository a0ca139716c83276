use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::LmError;

/// Dense integer identity of a vocabulary entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenId(pub u32);

impl TokenId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for TokenId {
    fn from(i: usize) -> Self {
        TokenId(i as u32)
    }
}

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// An ordered run of token ids, e.g. a prompt or a generated continuation.
pub type TokenSequence = Vec<TokenId>;

pub const BOS: &str = "<bos>";
pub const EOS: &str = "<eos>";
pub const UNK: &str = "<unk>";

/// Bidirectional token string / id mapping.
///
/// Corpus tokens occupy the low ids in frequency order; the three specials
/// are appended after them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
    bos: TokenId,
    eos: TokenId,
    unk: TokenId,
}

impl Vocabulary {
    /// Builds a vocabulary from an explicit token list. Specials are appended
    /// if the list does not already contain them.
    pub fn from_tokens<I, S>(tokens: I) -> Result<Self, LmError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut list: Vec<String> = Vec::new();
        let mut index = HashMap::new();
        for tok in tokens {
            let tok = tok.into();
            if tok.is_empty() || tok.chars().any(char::is_whitespace) {
                return Err(LmError::InvalidToken(tok));
            }
            if index.contains_key(&tok) {
                return Err(LmError::DuplicateToken(tok));
            }
            index.insert(tok.clone(), TokenId::from(list.len()));
            list.push(tok);
        }
        for special in [BOS, EOS, UNK] {
            if !index.contains_key(special) {
                index.insert(special.to_string(), TokenId::from(list.len()));
                list.push(special.to_string());
            }
        }
        Ok(Self {
            bos: index[BOS],
            eos: index[EOS],
            unk: index[UNK],
            tokens: list,
            index,
        })
    }

    /// Counts whitespace tokens over `documents` and keeps every token seen
    /// at least `min_count` times, ordered by descending frequency and then
    /// lexicographically.
    pub fn build<I, S>(documents: I, min_count: usize) -> Result<Self, LmError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut counts: HashMap<String, usize> = HashMap::new();
        let mut total = 0usize;
        for doc in documents {
            for tok in normalize_words(doc.as_ref()) {
                *counts.entry(tok).or_default() += 1;
                total += 1;
            }
        }
        if total == 0 {
            return Err(LmError::EmptyCorpus);
        }
        let mut kept: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(tok, c)| *c >= min_count.max(1) && !is_special(tok))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Self::from_tokens(kept.into_iter().map(|(t, _)| t))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn bos(&self) -> TokenId {
        self.bos
    }

    pub fn eos(&self) -> TokenId {
        self.eos
    }

    pub fn unk(&self) -> TokenId {
        self.unk
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id.index()).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Lowercases, splits on whitespace, and maps out-of-vocabulary words to
    /// `unk`.
    pub fn tokenize(&self, text: &str) -> TokenSequence {
        normalize_words(text)
            .map(|w| self.id(&w).unwrap_or(self.unk))
            .collect()
    }

    /// Joins tokens with single spaces. Ids outside the vocabulary render as
    /// the unk string.
    pub fn detokenize(&self, ids: &[TokenId]) -> String {
        let mut out = String::new();
        for (i, id) in ids.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            out.push_str(self.token(*id).unwrap_or(UNK));
        }
        out
    }

    /// Checks that every id is a valid index.
    pub fn validate(&self, ids: &[TokenId]) -> Result<(), LmError> {
        validate_ids(ids, self.len())
    }
}

pub(crate) fn validate_ids(ids: &[TokenId], vocab_size: usize) -> Result<(), LmError> {
    match ids.iter().find(|id| id.index() >= vocab_size) {
        Some(id) => Err(LmError::VocabMismatch {
            id: *id,
            vocab_size,
        }),
        None => Ok(()),
    }
}

fn is_special(tok: &str) -> bool {
    tok == BOS || tok == EOS || tok == UNK
}

fn normalize_words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split_whitespace().map(str::to_lowercase)
}

/// Free-function form of [`Vocabulary::tokenize`].
pub fn tokenize(text: &str, vocab: &Vocabulary) -> TokenSequence {
    vocab.tokenize(text)
}

/// Free-function form of [`Vocabulary::build`].
pub fn build_vocab<I, S>(corpus: I, min_count: usize) -> Result<Vocabulary, LmError>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    Vocabulary::build(corpus, min_count)
}
