//! Bag-of-words tf-idf features for the text baseline.

use serde::{Deserialize, Serialize};

use super::ScoreError;
use crate::preprocess::tokenize;

/// Sparse rows of `(column, value)` with strictly increasing columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseMatrix {
    pub n_cols: usize,
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl SparseMatrix {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Fitted vocabulary (sorted) and smoothed idf weights,
/// `idf = ln((1 + N) / (1 + df)) + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfVectorizer {
    vocabulary: Vec<String>,
    idf: Vec<f64>,
}

impl TfidfVectorizer {
    pub fn fit<S: AsRef<str>>(documents: &[S]) -> Result<Self, ScoreError> {
        if documents.is_empty() {
            return Err(ScoreError::EmptyCorpus);
        }
        let tokenized: Vec<Vec<String>> = documents.iter().map(|d| tokenize(d.as_ref())).collect();
        let mut vocabulary: Vec<String> = tokenized.iter().flatten().cloned().collect();
        vocabulary.sort();
        vocabulary.dedup();

        let mut df = vec![0usize; vocabulary.len()];
        for doc in &tokenized {
            let mut cols: Vec<usize> = doc
                .iter()
                .map(|t| vocabulary.binary_search(t).expect("token is in vocabulary"))
                .collect();
            cols.sort_unstable();
            cols.dedup();
            for c in cols {
                df[c] += 1;
            }
        }
        let n = documents.len() as f64;
        let idf = df
            .iter()
            .map(|&d| ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0)
            .collect();
        Ok(TfidfVectorizer { vocabulary, idf })
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    pub fn idf(&self, term: &str) -> Option<f64> {
        self.vocabulary
            .binary_search_by(|v| v.as_str().cmp(term))
            .ok()
            .map(|i| self.idf[i])
    }

    /// Raw term counts times idf; terms outside the fitted vocabulary are dropped.
    pub fn transform<S: AsRef<str>>(&self, documents: &[S]) -> SparseMatrix {
        let rows = documents
            .iter()
            .map(|doc| {
                let mut cols: Vec<usize> = tokenize(doc.as_ref())
                    .iter()
                    .filter_map(|t| self.vocabulary.binary_search(t).ok())
                    .collect();
                cols.sort_unstable();
                let mut row: Vec<(usize, f64)> = Vec::new();
                for c in cols {
                    match row.last_mut() {
                        Some((last, tf)) if *last == c => *tf += 1.0,
                        _ => row.push((c, 1.0)),
                    }
                }
                row.iter_mut().for_each(|(c, v)| *v *= self.idf[*c]);
                row
            })
            .collect();
        SparseMatrix {
            n_cols: self.vocabulary.len(),
            rows,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn idf_by_hand() {
        let v = TfidfVectorizer::fit(&["a a b", "a c"]).unwrap();
        assert_eq!(v.vocabulary(), ["a", "b", "c"]);
        assert_eq!(v.idf("a").unwrap(), 1.0);
        let rare = (3.0f64 / 2.0).ln() + 1.0;
        assert!((v.idf("b").unwrap() - rare).abs() < 1e-15);

        let m = v.transform(&["a a b", "c zzz"]);
        assert_eq!(m.rows[0], vec![(0, 2.0), (1, rare)]);
        // absent terms are not stored; unseen terms dropped
        assert_eq!(m.rows[1], vec![(2, rare)]);
    }

    #[test]
    fn single_document_has_unit_idf() {
        let v = TfidfVectorizer::fit(&["x y z y"]).unwrap();
        for term in ["x", "y", "z"] {
            assert_eq!(v.idf(term).unwrap(), 1.0);
        }
    }

    #[test]
    fn empty_corpus() {
        let docs: [&str; 0] = [];
        assert_eq!(TfidfVectorizer::fit(&docs), Err(ScoreError::EmptyCorpus));
    }

    #[test]
    fn same_multiset_same_row() {
        let v = TfidfVectorizer::fit(&["b a c a", "d a", "c c"]).unwrap();
        let m = v.transform(&["a b a c", "c a b a", "A, c. b a!"]);
        assert_eq!(m.rows[0], m.rows[1]);
        assert_eq!(m.rows[0], m.rows[2]);
        assert!(m.rows.iter().flatten().all(|(_, x)| *x >= 0.0));
    }
}
