//! Static word vectors, averaged sentence vectors and cosine similarity.

use std::collections::HashMap;
use std::path::Path;

use serde::Deserialize;

use super::{data_lines, read_file, ScoreError, ScoreMatrix, ScoreRow};
use crate::corpus::Dataset;
use crate::preprocess::{fill_placeholder, render_context, tokenize, ContextMethod};

/// GloVe-style word vector table.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dimension: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dimension: usize, vectors: HashMap<String, Vec<f64>>) -> Result<Self, ScoreError> {
        if dimension == 0 {
            return Err(ScoreError::DimensionMismatch { left: 0, right: 0 });
        }
        for v in vectors.values() {
            if v.len() != dimension {
                return Err(ScoreError::DimensionMismatch {
                    left: dimension,
                    right: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(ScoreError::NonFinite);
            }
        }
        Ok(EmbeddingTable { dimension, vectors })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.vectors.get(token).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn load(path: &Path) -> Result<Self, ScoreError> {
        parse_embedding_table(&read_file(path)?, &path.display().to_string())
    }
}

/// Parses `<vocab_size> <dimension>` followed by `token v1 .. vd` lines.
pub fn parse_embedding_table(text: &str, source_name: &str) -> Result<EmbeddingTable, ScoreError> {
    let err = |line: usize, message: String| ScoreError::Parse {
        source_name: source_name.to_string(),
        line,
        message,
    };
    let mut lines = data_lines(text);
    let (header_no, header) = lines
        .next()
        .ok_or_else(|| err(1, "empty embedding file".into()))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|f| {
            f.parse()
                .map_err(|_| err(header_no, format!("bad header `{header}`")))
        })
        .collect::<Result<_, _>>()?;
    let [vocab_size, dimension] = dims[..] else {
        return Err(err(header_no, format!("bad header `{header}`")));
    };
    if dimension == 0 {
        return Err(err(header_no, "dimension must be positive".into()));
    }
    let mut vectors = HashMap::with_capacity(vocab_size);
    for (line_no, line) in lines {
        let mut fields = line.split(' ').filter(|f| !f.is_empty());
        let token = fields
            .next()
            .ok_or_else(|| err(line_no, "missing token".into()))?;
        let values: Vec<f64> = fields
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| err(line_no, format!("bad value `{f}`")))
            })
            .collect::<Result<_, _>>()?;
        if values.len() != dimension {
            return Err(err(
                line_no,
                format!("expected {dimension} values, found {}", values.len()),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(err(line_no, "non-finite value".into()));
        }
        if vectors.insert(token.to_string(), values).is_some() {
            return Err(err(line_no, format!("duplicate token `{token}`")));
        }
    }
    if vectors.len() != vocab_size {
        return Err(err(
            header_no,
            format!(
                "header declares {vocab_size} tokens, found {}",
                vectors.len()
            ),
        ));
    }
    EmbeddingTable::new(dimension, vectors)
}

/// Mean of the vectors of in-vocabulary tokens; unknown tokens are skipped.
pub fn sentence_embedding(
    tokens: &[String],
    table: &EmbeddingTable,
) -> Result<Vec<f64>, ScoreError> {
    let mut sum = vec![0.0; table.dimension()];
    let mut found = 0usize;
    for vector in tokens.iter().filter_map(|t| table.get(t)) {
        for (acc, x) in sum.iter_mut().zip(vector) {
            *acc += x;
        }
        found += 1;
    }
    if found == 0 {
        return Err(ScoreError::AllTokensOov);
    }
    let n = found as f64;
    sum.iter_mut().for_each(|v| *v /= n);
    Ok(sum)
}

pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64, ScoreError> {
    if u.len() != v.len() {
        return Err(ScoreError::DimensionMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|b| b * b).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(ScoreError::ZeroVector);
    }
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

#[derive(Deserialize)]
struct ContextualLine {
    id: String,
    candidate_id: u8,
    vector: Vec<f64>,
}

/// Per-pair sentence vectors produced by a contextual encoder.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ContextualEmbeddings {
    dimension: usize,
    vectors: HashMap<(String, u8), Vec<f64>>,
}

impl ContextualEmbeddings {
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn get(&self, instance_id: &str, candidate_id: u8) -> Option<&[f64]> {
        self.vectors
            .get(&(instance_id.to_string(), candidate_id))
            .map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn load(path: &Path) -> Result<Self, ScoreError> {
        parse_contextual_embeddings(&read_file(path)?, &path.display().to_string())
    }
}

/// Parses the `{"id", "candidate_id", "vector"}` JSON-lines format.
pub fn parse_contextual_embeddings(
    text: &str,
    source_name: &str,
) -> Result<ContextualEmbeddings, ScoreError> {
    let err = |line: usize, message: String| ScoreError::Parse {
        source_name: source_name.to_string(),
        line,
        message,
    };
    let mut out = ContextualEmbeddings::default();
    for (line_no, line) in data_lines(text) {
        let parsed: ContextualLine =
            serde_json::from_str(line).map_err(|e| err(line_no, e.to_string()))?;
        if parsed.vector.is_empty() || parsed.vector.iter().any(|v| !v.is_finite()) {
            return Err(err(line_no, "vector must be non-empty and finite".into()));
        }
        if out.dimension == 0 {
            out.dimension = parsed.vector.len();
        } else if parsed.vector.len() != out.dimension {
            return Err(err(
                line_no,
                format!(
                    "expected dimension {}, found {}",
                    out.dimension,
                    parsed.vector.len()
                ),
            ));
        }
        if out
            .vectors
            .insert((parsed.id, parsed.candidate_id), parsed.vector)
            .is_some()
        {
            return Err(err(line_no, "duplicate (id, candidate_id)".into()));
        }
    }
    Ok(out)
}

/// Sentence vectors of every filled pair as a feature matrix with columns
/// `emb_0 .. emb_{d-1}`. A contextual vector, when present for a pair,
/// replaces the averaged static one.
pub fn embedding_matrix(
    dataset: &Dataset,
    method: ContextMethod,
    table: Option<&EmbeddingTable>,
    contextual: Option<&ContextualEmbeddings>,
) -> Result<ScoreMatrix, ScoreError> {
    let dimension = match (table, contextual) {
        (Some(t), Some(c)) if !c.is_empty() && c.dimension() != t.dimension() => {
            return Err(ScoreError::DimensionMismatch {
                left: t.dimension(),
                right: c.dimension(),
            })
        }
        (Some(t), _) => t.dimension(),
        (None, Some(c)) => c.dimension(),
        (None, None) => return Err(ScoreError::DimensionMismatch { left: 0, right: 0 }),
    };
    let mut rows = Vec::new();
    for (instance, candidate) in dataset.pairs() {
        let at = |e: ScoreError| ScoreError::At {
            instance_id: instance.id.clone(),
            candidate_id: candidate.candidate_id,
            column: "embedding".into(),
            source: Box::new(e),
        };
        let features = match contextual.and_then(|c| c.get(&instance.id, candidate.candidate_id)) {
            Some(v) => v.to_vec(),
            None => {
                let table = table.ok_or_else(|| {
                    at(ScoreError::MissingScore {
                        instance_id: instance.id.clone(),
                        candidate_id: candidate.candidate_id,
                    })
                })?;
                let filled = fill_placeholder(&render_context(instance, method), &candidate.text)
                    .map_err(|e| at(e.into()))?;
                sentence_embedding(&tokenize(&filled), table).map_err(at)?
            }
        };
        rows.push(ScoreRow {
            instance_id: instance.id.clone(),
            candidate_id: candidate.candidate_id,
            features,
        });
    }
    ScoreMatrix::new((0..dimension).map(|i| format!("emb_{i}")).collect(), rows)
}
