//! Raw plausibility signals and their translation into per-candidate features.
//!
//! Each signal lives in its own submodule together with its file format.
//! [`ScoreColumn`] is the common interface used to assemble one or more
//! signals into a [`ScoreMatrix`], which is what the numeric model heads
//! consume. A matrix with several columns is an ensemble.

mod embedding;
mod mlm;
mod ngram;
mod ranking;
mod rtd;
mod tfidf;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{ClozeInstance, Dataset, FillerCandidate};
use crate::preprocess::PreprocessError;

pub use embedding::{
    cosine_similarity, embedding_matrix, parse_contextual_embeddings, parse_embedding_table,
    sentence_embedding, ContextualEmbeddings, EmbeddingTable,
};
pub use mlm::{
    log_sum_exp, logit_score, parse_mlm_scores, similarity_score, softmax_prob, topk_probabilities,
    write_mlm_scores, MlmScores, SimilarityVariant, SimilarityWeighting, VocabDistribution,
};
pub use ngram::{
    ngram_for, ngram_frequency, ngram_to_feature, parse_ngram_table, NgramTable, NgramTransform,
};
pub use ranking::pairwise_ranking_loss;
pub use rtd::{parse_rtd, write_rtd, RtdIndex};
pub use tfidf::{SparseMatrix, TfidfVectorizer};

#[derive(Debug, Error, PartialEq)]
pub enum ScoreError {
    #[error("io error reading {path}: {message}")]
    Io { path: String, message: String },
    #[error("{source_name}, line {line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },
    #[error("no score entry for instance {0}")]
    UnknownInstance(String),
    #[error("instance {instance_id} has no logit for candidate {candidate_id}")]
    UnknownCandidate {
        instance_id: String,
        candidate_id: u8,
    },
    #[error("no stored score for instance {instance_id}, candidate {candidate_id}")]
    MissingScore {
        instance_id: String,
        candidate_id: u8,
    },
    #[error("every token is out of the embedding vocabulary")]
    AllTokensOov,
    #[error("cosine similarity of a zero vector")]
    ZeroVector,
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("top-k list has {have} entries, need at least {need}")]
    InsufficientTopK { have: usize, need: usize },
    #[error("cannot fit tf-idf on an empty corpus")]
    EmptyCorpus,
    #[error("non-finite score value")]
    NonFinite,
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error("instance {instance_id}, candidate {candidate_id}, column {column}: {source}")]
    At {
        instance_id: String,
        candidate_id: u8,
        column: String,
        source: Box<ScoreError>,
    },
}

pub(crate) fn read_file(path: &Path) -> Result<String, ScoreError> {
    std::fs::read_to_string(path).map_err(|e| ScoreError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Lines of a score file with 1-based line numbers, skipping blanks and
/// `#` comment lines.
pub(crate) fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
}

/// One configured feature column: maps a candidate in context to a number.
pub trait ScoreColumn: Send + Sync {
    fn name(&self) -> &str;

    fn value(
        &self,
        instance: &ClozeInstance,
        candidate: &FillerCandidate,
    ) -> Result<f64, ScoreError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub instance_id: String,
    pub candidate_id: u8,
    pub features: Vec<f64>,
}

/// Dense feature rows, one per (instance, candidate) pair in dataset order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix {
    column_names: Vec<String>,
    rows: Vec<ScoreRow>,
}

impl ScoreMatrix {
    /// Builds a matrix, rejecting ragged rows and non-finite entries.
    pub fn new(column_names: Vec<String>, rows: Vec<ScoreRow>) -> Result<Self, ScoreError> {
        let width = column_names.len();
        for row in &rows {
            if row.features.len() != width {
                return Err(ScoreError::DimensionMismatch {
                    left: width,
                    right: row.features.len(),
                });
            }
            if row.features.iter().any(|v| !v.is_finite()) {
                return Err(ScoreError::At {
                    instance_id: row.instance_id.clone(),
                    candidate_id: row.candidate_id,
                    column: "?".into(),
                    source: Box::new(ScoreError::NonFinite),
                });
            }
        }
        Ok(ScoreMatrix { column_names, rows })
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn rows(&self) -> &[ScoreRow] {
        &self.rows
    }

    pub fn width(&self) -> usize {
        self.column_names.len()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn features(&self) -> Vec<&[f64]> {
        self.rows.iter().map(|r| r.features.as_slice()).collect()
    }

    /// Values of one column in row order.
    pub fn column(&self, index: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.features[index]).collect()
    }
}

/// Evaluates every column on every pair of `dataset`, in the given order.
pub fn assemble_score_matrix(
    dataset: &Dataset,
    sources: &[&dyn ScoreColumn],
) -> Result<ScoreMatrix, ScoreError> {
    let mut rows = Vec::with_capacity(dataset.len() * 5);
    for (instance, candidate) in dataset.pairs() {
        let features = sources
            .iter()
            .map(|source| {
                source
                    .value(instance, candidate)
                    .and_then(|v| {
                        if v.is_finite() {
                            Ok(v)
                        } else {
                            Err(ScoreError::NonFinite)
                        }
                    })
                    .map_err(|e| ScoreError::At {
                        instance_id: instance.id.clone(),
                        candidate_id: candidate.candidate_id,
                        column: source.name().to_string(),
                        source: Box::new(e),
                    })
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(ScoreRow {
            instance_id: instance.id.clone(),
            candidate_id: candidate.candidate_id,
            features,
        });
    }
    let names = sources.iter().map(|s| s.name().to_string()).collect();
    ScoreMatrix::new(names, rows)
}

/// Logit of the candidate's scored token.
pub struct MlmLogitColumn {
    pub name: String,
    pub scores: MlmScores,
}

impl ScoreColumn for MlmLogitColumn {
    fn name(&self) -> &str {
        &self.name
    }

    fn value(
        &self,
        instance: &ClozeInstance,
        candidate: &FillerCandidate,
    ) -> Result<f64, ScoreError> {
        logit_score(self.scores.get(&instance.id)?, candidate.candidate_id)
    }
}

/// Full-vocabulary softmax probability of the candidate's scored token.
pub struct MlmSoftmaxColumn {
    pub name: String,
    pub scores: MlmScores,
}

impl ScoreColumn for MlmSoftmaxColumn {
    fn name(&self) -> &str {
        &self.name
    }

    fn value(
        &self,
        instance: &ClozeInstance,
        candidate: &FillerCandidate,
    ) -> Result<f64, ScoreError> {
        softmax_prob(self.scores.get(&instance.id)?, candidate.candidate_id)
    }
}

/// Embedding similarity between the candidate-filled text and the text
/// filled with the model's top predictions.
pub struct SimilarityColumn {
    pub name: String,
    pub scores: MlmScores,
    pub table: EmbeddingTable,
    pub variant: SimilarityVariant,
    pub weighting: SimilarityWeighting,
    pub method: crate::preprocess::ContextMethod,
}

impl ScoreColumn for SimilarityColumn {
    fn name(&self) -> &str {
        &self.name
    }

    fn value(
        &self,
        instance: &ClozeInstance,
        candidate: &FillerCandidate,
    ) -> Result<f64, ScoreError> {
        similarity_score(
            self.variant,
            self.weighting,
            self.scores.get(&instance.id)?,
            instance,
            candidate,
            self.method,
            &self.table,
        )
    }
}

/// Transformed n-gram count around the slot.
pub struct NgramColumn {
    pub name: String,
    pub table: NgramTable,
    pub transform: NgramTransform,
}

impl ScoreColumn for NgramColumn {
    fn name(&self) -> &str {
        &self.name
    }

    fn value(
        &self,
        instance: &ClozeInstance,
        candidate: &FillerCandidate,
    ) -> Result<f64, ScoreError> {
        Ok(ngram_to_feature(
            ngram_frequency(&self.table, instance, candidate),
            self.transform,
        ))
    }
}

/// Stored replaced-token-detection probability.
pub struct RtdColumn {
    pub name: String,
    pub index: RtdIndex,
}

impl ScoreColumn for RtdColumn {
    fn name(&self) -> &str {
        &self.name
    }

    fn value(
        &self,
        instance: &ClozeInstance,
        candidate: &FillerCandidate,
    ) -> Result<f64, ScoreError> {
        self.index.lookup(&instance.id, candidate.candidate_id)
    }
}
