//! Plain-text corpora: documents separated by one or more blank lines.

use std::fs;
use std::path::Path;

use super::HarnessError;
use crate::lm::{TokenSequence, Vocabulary};

/// Splits `text` into documents at blank lines. Surrounding whitespace is
/// trimmed and empty documents are dropped.
pub fn split_documents(text: &str) -> Vec<String> {
    let mut docs = Vec::new();
    let mut current = String::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            if !current.trim().is_empty() {
                docs.push(current.trim().to_string());
            }
            current.clear();
        } else {
            if !current.is_empty() {
                current.push('\n');
            }
            current.push_str(line);
        }
    }
    if !current.trim().is_empty() {
        docs.push(current.trim().to_string());
    }
    docs
}

/// Inverse of [`split_documents`] for single-paragraph documents.
pub fn join_documents(docs: &[String]) -> String {
    let mut out = docs.join("\n\n");
    out.push('\n');
    out
}

pub fn read_documents(path: &Path) -> Result<Vec<String>, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    Ok(split_documents(&text))
}

/// `bos doc eos` for every document.
pub fn training_sequences(docs: &[String], vocab: &Vocabulary) -> Vec<TokenSequence> {
    docs.iter()
        .map(|d| {
            let mut seq = vec![vocab.bos()];
            seq.extend(vocab.tokenize(d));
            seq.push(vocab.eos());
            seq
        })
        .collect()
}

/// `bos` plus the first `prompt_len` tokens of every document that has more
/// than `prompt_len` tokens.
pub fn extract_prompts(docs: &[String], vocab: &Vocabulary, prompt_len: usize) -> Vec<TokenSequence> {
    docs.iter()
        .map(|d| vocab.tokenize(d))
        .filter(|t| t.len() > prompt_len)
        .map(|t| {
            let mut p = vec![vocab.bos()];
            p.extend_from_slice(&t[..prompt_len]);
            p
        })
        .collect()
}
