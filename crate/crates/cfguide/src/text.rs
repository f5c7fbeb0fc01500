//! Tokenization, token-level Levenshtein distance and word-change detection.
//!
//! Every other module measures or edits text through this one, so the
//! tokenizer is deliberately simple and model-free: a token is either a
//! maximal run of word characters (alphanumeric or `_`) or a single
//! punctuation character. Whitespace only separates.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TextError {
    #[error("watch word {0:?} does not occur in the original text")]
    WatchWordNotInOriginal(String),
}

/// An ordered sequence of non-empty, whitespace-free tokens.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenSequence(Vec<String>);

impl TokenSequence {
    /// Wraps an existing token list.
    ///
    /// Panics if any token is empty or contains whitespace.
    pub fn from_tokens(tokens: Vec<String>) -> Self {
        for t in &tokens {
            assert!(
                !t.is_empty() && !t.chars().any(char::is_whitespace),
                "invalid token {t:?}"
            );
        }
        Self(tokens)
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Reconstructs a text with single spaces between tokens.
    pub fn join(&self) -> String {
        self.0.join(" ")
    }

    /// Case-folded set of the tokens.
    pub fn folded_set(&self) -> BTreeSet<String> {
        self.0.iter().map(|t| t.to_lowercase()).collect()
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Splits `text` into word runs and single-character punctuation tokens.
///
/// Deterministic and case-preserving; empty input yields an empty sequence.
pub fn tokenize(text: &str) -> TokenSequence {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for c in text.chars() {
        if is_word_char(c) {
            current.push(c);
        } else {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
            if !c.is_whitespace() {
                tokens.push(c.to_string());
            }
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    TokenSequence(tokens)
}

/// Minimal number of token insertions, deletions and substitutions
/// transforming `a` into `b`.
pub fn token_levenshtein(a: &TokenSequence, b: &TokenSequence) -> usize {
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    if short.is_empty() {
        return long.len();
    }
    let short = short.tokens();
    let long = long.tokens();

    let mut prev: Vec<usize> = (0..=short.len()).collect();
    let mut curr = vec![0usize; short.len() + 1];
    for (j, lt) in long.iter().enumerate() {
        curr[0] = j + 1;
        for (i, st) in short.iter().enumerate() {
            let cost = usize::from(st != lt);
            curr[i + 1] = (prev[i + 1] + 1).min(curr[i] + 1).min(prev[i] + cost);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[short.len()]
}

/// Fraction of `watch` words absent from `generated`, under case-folded set
/// membership.
///
/// Every watch word must occur (case-folded) in `original`; an empty watch
/// set yields `0.0`. Duplicated watch words are counted once.
pub fn changed_words(
    original: &TokenSequence,
    generated: &TokenSequence,
    watch: &[String],
) -> Result<f64, TextError> {
    let folded_watch: BTreeSet<String> = watch.iter().map(|w| w.to_lowercase()).collect();
    if folded_watch.is_empty() {
        return Ok(0.0);
    }
    let original_set = original.folded_set();
    for w in &folded_watch {
        if !original_set.contains(w) {
            return Err(TextError::WatchWordNotInOriginal(w.clone()));
        }
    }
    let generated_set = generated.folded_set();
    let missing = folded_watch
        .iter()
        .filter(|w| !generated_set.contains(*w))
        .count();
    Ok(missing as f64 / folded_watch.len() as f64)
}
