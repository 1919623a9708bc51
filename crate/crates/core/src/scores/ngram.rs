//! Corpus n-gram counts around the slot.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{data_lines, read_file, ScoreError};
use crate::corpus::{ClozeInstance, FillerCandidate, PLACEHOLDER};
use crate::preprocess::tokenize;

pub const SENTENCE_START: &str = "<s>";
pub const SENTENCE_END: &str = "</s>";

/// Trigram and quadrigram counts. Absent keys count as zero.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NgramTable {
    counts: HashMap<Vec<String>, u64>,
}

impl NgramTable {
    pub fn count(&self, gram: &[String]) -> u64 {
        self.counts.get(gram).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[String], u64)> {
        self.counts.iter().map(|(k, v)| (k.as_slice(), *v))
    }

    pub fn load(path: &Path) -> Result<Self, ScoreError> {
        parse_ngram_table(&read_file(path)?, &path.display().to_string())
    }
}

/// Parses `w1 w2 w3 [w4] count` tab-separated rows. Repeated keys are summed.
pub fn parse_ngram_table(text: &str, source_name: &str) -> Result<NgramTable, ScoreError> {
    let mut counts: HashMap<Vec<String>, u64> = HashMap::new();
    for (line_no, line) in data_lines(text) {
        let fields: Vec<&str> = line.split('\t').collect();
        let err = |message: String| ScoreError::Parse {
            source_name: source_name.to_string(),
            line: line_no,
            message,
        };
        let (count, words) = fields
            .split_last()
            .filter(|(_, w)| w.len() == 3 || w.len() == 4)
            .ok_or_else(|| err(format!("expected 4 or 5 fields, found {}", fields.len())))?;
        let count: u64 = count
            .trim()
            .parse()
            .map_err(|_| err(format!("bad count `{count}`")))?;
        if words.iter().any(|w| w.is_empty()) {
            return Err(err("empty n-gram word".into()));
        }
        let key = words.iter().map(|w| w.to_string()).collect();
        *counts.entry(key).or_default() += count;
    }
    Ok(NgramTable { counts })
}

/// The gram looked up for a candidate: previous token, filler tokens, next
/// token, padded with `<s>` / `</s>` at sentence edges.
pub fn ngram_for(instance: &ClozeInstance, candidate: &FillerCandidate) -> Vec<String> {
    let tokens = tokenize(&instance.masked_sentence);
    let slot = tokens.iter().position(|t| t.contains(PLACEHOLDER));
    let (prev, next) = match slot {
        Some(i) => (
            i.checked_sub(1).map(|j| tokens[j].clone()),
            tokens.get(i + 1).cloned(),
        ),
        None => (None, None),
    };
    let mut gram = vec![prev.unwrap_or_else(|| SENTENCE_START.to_string())];
    gram.extend(tokenize(&candidate.text));
    gram.push(next.unwrap_or_else(|| SENTENCE_END.to_string()));
    gram
}

pub fn ngram_frequency(
    table: &NgramTable,
    instance: &ClozeInstance,
    candidate: &FillerCandidate,
) -> u64 {
    table.count(&ngram_for(instance, candidate))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NgramTransform {
    Raw,
    #[default]
    Log1p,
}

impl NgramTransform {
    pub fn column_name(self) -> &'static str {
        match self {
            NgramTransform::Raw => "ngram_raw",
            NgramTransform::Log1p => "ngram_log1p",
        }
    }
}

pub fn ngram_to_feature(count: u64, transform: NgramTransform) -> f64 {
    match transform {
        NgramTransform::Raw => count as f64,
        NgramTransform::Log1p => (count as f64).ln_1p(),
    }
}
