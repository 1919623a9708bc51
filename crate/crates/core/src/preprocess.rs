//! Model input text: context rendering, placeholder filling and tokenization.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{ClozeInstance, PLACEHOLDER};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PreprocessError {
    #[error("text has no placeholder")]
    NoPlaceholder,
    #[error("text has more than one placeholder")]
    MultiplePlaceholders,
    #[error("filler is empty")]
    EmptyFiller,
    #[error("filler `{0}` has more than two words")]
    TooManyWords(String),
}

/// Which parts of an instance make up the model input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextMethod {
    /// Title, section header, previous context, sentence, next context.
    Full,
    /// Previous context, sentence, next context.
    ContextOnly,
    /// The masked sentence alone.
    SentenceOnly,
}

impl ContextMethod {
    pub const ALL: [ContextMethod; 3] = [
        ContextMethod::Full,
        ContextMethod::ContextOnly,
        ContextMethod::SentenceOnly,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ContextMethod::Full => "full",
            ContextMethod::ContextOnly => "context_only",
            ContextMethod::SentenceOnly => "sentence_only",
        }
    }
}

impl fmt::Display for ContextMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ContextMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ContextMethod::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown context method `{s}`"))
    }
}

fn ends_sentence(text: &str) -> bool {
    text.ends_with(['.', '!', '?'])
}

/// Joins non-empty parts with ". ", or a single space when the left part
/// already ends in `.`, `!` or `?`.
fn join_sentences<'a>(parts: impl IntoIterator<Item = &'a str>) -> String {
    let mut out = String::new();
    for part in parts.into_iter().map(str::trim).filter(|p| !p.is_empty()) {
        if !out.is_empty() {
            out.push_str(if ends_sentence(&out) { " " } else { ". " });
        }
        out.push_str(part);
    }
    out
}

/// Renders the masked model input for one instance.
pub fn render_context(instance: &ClozeInstance, method: ContextMethod) -> String {
    match method {
        ContextMethod::SentenceOnly => instance.masked_sentence.clone(),
        ContextMethod::ContextOnly => join_sentences([
            instance.prev_context.as_str(),
            instance.masked_sentence.as_str(),
            instance.next_context.as_str(),
        ]),
        ContextMethod::Full => join_sentences([
            instance.title.as_str(),
            instance.section_header.as_str(),
            instance.prev_context.as_str(),
            instance.masked_sentence.as_str(),
            instance.next_context.as_str(),
        ]),
    }
}

/// Replaces the single placeholder in `masked_text` with `filler`.
pub fn fill_placeholder(masked_text: &str, filler: &str) -> Result<String, PreprocessError> {
    if filler.is_empty() {
        return Err(PreprocessError::EmptyFiller);
    }
    match masked_text.matches(PLACEHOLDER).count() {
        0 => Err(PreprocessError::NoPlaceholder),
        1 => Ok(masked_text.replacen(PLACEHOLDER, filler, 1)),
        _ => Err(PreprocessError::MultiplePlaceholders),
    }
}

/// Reduces a two-word filler to its last word; the masked LM scores one
/// token per slot.
pub fn mlm_adjust_filler(filler: &str) -> Result<&str, PreprocessError> {
    let words: Vec<&str> = filler.split_whitespace().collect();
    match words.as_slice() {
        [] => Err(PreprocessError::EmptyFiller),
        [word] | [_, word] => Ok(word),
        _ => Err(PreprocessError::TooManyWords(filler.to_string())),
    }
}

fn is_strippable(c: char) -> bool {
    (c.is_ascii_punctuation() && c != '_')
        || matches!(
            c,
            '\u{2018}'
                | '\u{2019}'
                | '\u{201C}'
                | '\u{201D}'
                | '\u{2013}'
                | '\u{2014}'
                | '\u{2026}'
        )
}

/// Lowercased whitespace tokens with surrounding punctuation removed.
///
/// Underscores are kept, so the placeholder survives as its own token.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|raw| raw.to_lowercase())
        .map(|lower| lower.trim_matches(is_strippable).to_string())
        .filter(|t| !t.is_empty())
        .collect()
}
