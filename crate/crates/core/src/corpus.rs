//! Cloze instances, labels and the dataset TSV reader.
//!
//! A dataset file is UTF-8, tab separated, with a header row naming the
//! columns `id, title, section_header, prev_context, sentence, next_context,
//! filler1..filler5` and, optionally, `label1..label5` and `score1..score5`.
//! Columns are located by name, so their order in the file does not matter.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The blank in a masked sentence.
pub const PLACEHOLDER: &str = "______";

/// Number of filler candidates attached to every instance.
pub const CANDIDATES_PER_INSTANCE: usize = 5;

const REQUIRED_COLUMNS: [&str; 6] = [
    "id",
    "title",
    "section_header",
    "prev_context",
    "sentence",
    "next_context",
];

#[derive(Debug, Error, PartialEq)]
pub enum CorpusError {
    #[error("io error reading {path}: {message}")]
    Io { path: String, message: String },
    #[error("missing header column `{0}`")]
    MissingColumn(String),
    #[error("instance {0}: masked sentence has no `______` placeholder")]
    MissingPlaceholder(String),
    #[error("instance {0}: masked sentence has more than one placeholder")]
    MultiplePlaceholders(String),
    #[error("instance {id}: placeholder found outside the masked sentence (in {field})")]
    StrayPlaceholder { id: String, field: String },
    #[error("instance {0}: expected exactly 5 filler candidates")]
    WrongCandidateCount(String),
    #[error("instance {id}: filler `{text}` must be one or two words without tabs or newlines")]
    BadFiller { id: String, text: String },
    #[error("instance {0}: label `{1}` is not IMPLAUSIBLE, NEUTRAL or PLAUSIBLE")]
    BadLabel(String, String),
    #[error("instance {0}: score `{1}` is not a number in [1, 5]")]
    BadScore(String, String),
    #[error("instance {0}: duplicate instance id")]
    DuplicateId(String),
    #[error("malformed row at line {0}")]
    MalformedRow(usize),
}

/// Gold plausibility class, ordered from worst to best.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Label {
    Implausible,
    Neutral,
    Plausible,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Implausible, Label::Neutral, Label::Plausible];

    /// Position in the ordinal order (0, 1, 2); also the fscore column index.
    pub fn index(self) -> usize {
        match self {
            Label::Implausible => 0,
            Label::Neutral => 1,
            Label::Plausible => 2,
        }
    }

    pub fn from_index(index: usize) -> Option<Label> {
        Label::ALL.get(index).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Implausible => "IMPLAUSIBLE",
            Label::Neutral => "NEUTRAL",
            Label::Plausible => "PLAUSIBLE",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "IMPLAUSIBLE" => Ok(Label::Implausible),
            "NEUTRAL" => Ok(Label::Neutral),
            "PLAUSIBLE" => Ok(Label::Plausible),
            other => Err(other.to_string()),
        }
    }
}

/// Ordinal score of a label: 1, 3 or 5.
pub fn label_to_score(label: Label) -> f64 {
    match label {
        Label::Implausible => 1.0,
        Label::Neutral => 3.0,
        Label::Plausible => 5.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FillerCandidate {
    pub candidate_id: u8,
    pub text: String,
    pub gold_label: Option<Label>,
    pub gold_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClozeInstance {
    pub id: String,
    pub title: String,
    pub section_header: String,
    pub prev_context: String,
    pub masked_sentence: String,
    pub next_context: String,
    pub candidates: Vec<FillerCandidate>,
}

impl ClozeInstance {
    /// Checks every structural invariant of an instance.
    pub fn validate(&self) -> Result<(), CorpusError> {
        match self.masked_sentence.matches(PLACEHOLDER).count() {
            0 => return Err(CorpusError::MissingPlaceholder(self.id.clone())),
            1 => {}
            _ => return Err(CorpusError::MultiplePlaceholders(self.id.clone())),
        }
        for (field, value) in [
            ("title", &self.title),
            ("section_header", &self.section_header),
            ("prev_context", &self.prev_context),
            ("next_context", &self.next_context),
        ] {
            if value.contains(PLACEHOLDER) {
                return Err(CorpusError::StrayPlaceholder {
                    id: self.id.clone(),
                    field: field.to_string(),
                });
            }
        }
        if self.candidates.len() != CANDIDATES_PER_INSTANCE {
            return Err(CorpusError::WrongCandidateCount(self.id.clone()));
        }
        for (expected, candidate) in (1u8..).zip(&self.candidates) {
            if candidate.candidate_id != expected {
                return Err(CorpusError::WrongCandidateCount(self.id.clone()));
            }
            let words = candidate.text.split_whitespace().count();
            if candidate.text.contains(['\t', '\n', '\r']) || !(1..=2).contains(&words) {
                return Err(CorpusError::BadFiller {
                    id: self.id.clone(),
                    text: candidate.text.clone(),
                });
            }
            if let Some(score) = candidate.gold_score {
                if !(1.0..=5.0).contains(&score) {
                    return Err(CorpusError::BadScore(self.id.clone(), score.to_string()));
                }
            }
        }
        Ok(())
    }

    pub fn candidate(&self, candidate_id: u8) -> Option<&FillerCandidate> {
        self.candidates
            .iter()
            .find(|c| c.candidate_id == candidate_id)
    }
}

/// Per-class counts indexed by [`Label::index`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts(pub [usize; 3]);

impl LabelCounts {
    pub fn from_labels<'a>(labels: impl IntoIterator<Item = &'a Label>) -> Self {
        let mut counts = [0usize; 3];
        for label in labels {
            counts[label.index()] += 1;
        }
        LabelCounts(counts)
    }

    pub fn get(&self, label: Label) -> usize {
        self.0[label.index()]
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    instances: Vec<ClozeInstance>,
    label_counts: LabelCounts,
}

impl Dataset {
    /// Builds a dataset from already constructed instances, validating each.
    pub fn new(instances: Vec<ClozeInstance>) -> Result<Self, CorpusError> {
        let mut seen = std::collections::HashSet::new();
        for instance in &instances {
            instance.validate()?;
            if !seen.insert(instance.id.as_str()) {
                return Err(CorpusError::DuplicateId(instance.id.clone()));
            }
        }
        let label_counts = LabelCounts::from_labels(
            instances
                .iter()
                .flat_map(|i| i.candidates.iter().filter_map(|c| c.gold_label.as_ref())),
        );
        Ok(Dataset {
            instances,
            label_counts,
        })
    }

    pub fn instances(&self) -> &[ClozeInstance] {
        &self.instances
    }

    pub fn label_counts(&self) -> LabelCounts {
        self.label_counts
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// Every (instance, candidate) pair in dataset order.
    pub fn pairs(&self) -> impl Iterator<Item = (&ClozeInstance, &FillerCandidate)> {
        self.instances
            .iter()
            .flat_map(|i| i.candidates.iter().map(move |c| (i, c)))
    }

    /// Gold labels in pair order, or `None` if any pair is unlabeled.
    pub fn gold_labels(&self) -> Option<Vec<Label>> {
        self.pairs().map(|(_, c)| c.gold_label).collect()
    }

    /// Gold scores in pair order, or `None` if any pair lacks one.
    pub fn gold_scores(&self) -> Option<Vec<f64>> {
        self.pairs().map(|(_, c)| c.gold_score).collect()
    }

    /// Serializes back to the canonical TSV layout.
    pub fn to_tsv(&self) -> String {
        let labeled = self.pairs().all(|(_, c)| c.gold_label.is_some());
        let scored = self.pairs().all(|(_, c)| c.gold_score.is_some());
        let mut header: Vec<String> = REQUIRED_COLUMNS.iter().map(|s| s.to_string()).collect();
        header.extend((1..=5).map(|i| format!("filler{i}")));
        if labeled {
            header.extend((1..=5).map(|i| format!("label{i}")));
        }
        if scored {
            header.extend((1..=5).map(|i| format!("score{i}")));
        }
        let mut out = header.join("\t");
        out.push('\n');
        for instance in &self.instances {
            let mut row = vec![
                instance.id.clone(),
                instance.title.clone(),
                instance.section_header.clone(),
                instance.prev_context.clone(),
                instance.masked_sentence.clone(),
                instance.next_context.clone(),
            ];
            row.extend(instance.candidates.iter().map(|c| c.text.clone()));
            if labeled {
                row.extend(
                    instance
                        .candidates
                        .iter()
                        .map(|c| c.gold_label.map(|l| l.to_string()).unwrap_or_default()),
                );
            }
            if scored {
                row.extend(
                    instance
                        .candidates
                        .iter()
                        .map(|c| c.gold_score.map(|s| s.to_string()).unwrap_or_default()),
                );
            }
            out.push_str(&row.join("\t"));
            out.push('\n');
        }
        out
    }
}

/// Reads a dataset TSV from disk.
pub fn load_dataset(path: impl AsRef<Path>, labeled: bool) -> Result<Dataset, CorpusError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| CorpusError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_dataset(&text, labeled)
}

/// Parses dataset TSV text. With `labeled` set the label columns are
/// required; otherwise gold fields are left empty.
pub fn parse_dataset(text: &str, labeled: bool) -> Result<Dataset, CorpusError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)));
    let header: Vec<&str> = match lines.next() {
        Some((_, line)) => line.split('\t').collect(),
        None => return Dataset::new(Vec::new()),
    };
    let column = |name: &str| header.iter().position(|h| *h == name);
    let require = |name: &str| column(name).ok_or_else(|| CorpusError::MissingColumn(name.into()));

    let base: Vec<usize> = REQUIRED_COLUMNS
        .iter()
        .map(|c| require(c))
        .collect::<Result<_, _>>()?;
    let fillers: Vec<usize> = (1..=5)
        .map(|i| require(&format!("filler{i}")))
        .collect::<Result<_, _>>()?;
    let label_cols: Option<Vec<usize>> = if labeled {
        Some(
            (1..=5)
                .map(|i| require(&format!("label{i}")))
                .collect::<Result<_, _>>()?,
        )
    } else {
        None
    };
    let score_cols: Option<Vec<usize>> = if labeled {
        (1..=5).map(|i| column(&format!("score{i}"))).collect()
    } else {
        None
    };

    let mut instances = Vec::new();
    for (line_no, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != header.len() {
            return Err(CorpusError::MalformedRow(line_no));
        }
        let id = fields[base[0]].to_string();
        if id.is_empty() {
            return Err(CorpusError::MalformedRow(line_no));
        }
        let mut candidates = Vec::with_capacity(5);
        for (slot, &col) in fillers.iter().enumerate() {
            let text = fields[col].trim();
            if text.is_empty() {
                return Err(CorpusError::WrongCandidateCount(id));
            }
            let gold_label = match &label_cols {
                Some(cols) => Some(
                    fields[cols[slot]]
                        .trim()
                        .parse::<Label>()
                        .map_err(|bad| CorpusError::BadLabel(id.clone(), bad))?,
                ),
                None => None,
            };
            let gold_score = match &score_cols {
                Some(cols) => {
                    let raw = fields[cols[slot]].trim();
                    let value: f64 = raw
                        .parse()
                        .map_err(|_| CorpusError::BadScore(id.clone(), raw.to_string()))?;
                    if !(1.0..=5.0).contains(&value) {
                        return Err(CorpusError::BadScore(id.clone(), raw.to_string()));
                    }
                    Some(value)
                }
                None => None,
            };
            candidates.push(FillerCandidate {
                candidate_id: slot as u8 + 1,
                text: text.to_string(),
                gold_label,
                gold_score,
            });
        }
        instances.push(ClozeInstance {
            id,
            title: fields[base[1]].to_string(),
            section_header: fields[base[2]].to_string(),
            prev_context: fields[base[3]].to_string(),
            masked_sentence: fields[base[4]].to_string(),
            next_context: fields[base[5]].to_string(),
            candidates,
        });
    }
    Dataset::new(instances)
}
