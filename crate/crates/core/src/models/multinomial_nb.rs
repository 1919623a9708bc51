use serde::{Deserialize, Serialize};

use super::{argmax_label, class_counts, ModelError};
use crate::corpus::Label;
use crate::scores::SparseMatrix;

/// Multinomial naive Bayes over non-negative term weights with additive
/// smoothing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultinomialNbModel {
    pub class_log_priors: [f64; 3],
    /// `term_log_likelihoods[class][term]`
    pub term_log_likelihoods: [Vec<f64>; 3],
    pub alpha: f64,
}

pub fn fit_multinomial_nb(
    matrix: &SparseMatrix,
    labels: &[Label],
    alpha: f64,
) -> Result<MultinomialNbModel, ModelError> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(ModelError::InvalidHyperparameter(format!(
            "smoothing alpha {alpha} must be positive"
        )));
    }
    if matrix.len() != labels.len() {
        return Err(ModelError::LengthMismatch {
            features: matrix.len(),
            labels: labels.len(),
        });
    }
    if labels.is_empty() {
        return Err(ModelError::Empty);
    }
    let counts = class_counts(labels)?;
    let n_terms = matrix.n_cols;
    let mut term_totals: [Vec<f64>; 3] = std::array::from_fn(|_| vec![0.0; n_terms]);
    for (row, label) in matrix.rows.iter().zip(labels) {
        for &(col, value) in row {
            if value < 0.0 {
                return Err(ModelError::NegativeFeature(value));
            }
            if col >= n_terms {
                return Err(ModelError::WidthMismatch {
                    expected: n_terms,
                    found: col + 1,
                });
            }
            term_totals[label.index()][col] += value;
        }
    }
    let n = labels.len() as f64;
    let term_log_likelihoods = term_totals.map(|totals| {
        let denom = (totals.iter().sum::<f64>() + alpha * n_terms as f64).ln();
        totals.iter().map(|t| (t + alpha).ln() - denom).collect()
    });
    Ok(MultinomialNbModel {
        class_log_priors: std::array::from_fn(|c| (counts[c] as f64 / n).ln()),
        term_log_likelihoods,
        alpha,
    })
}

impl MultinomialNbModel {
    pub fn n_terms(&self) -> usize {
        self.term_log_likelihoods[0].len()
    }

    pub fn joint_log_likelihood(&self, row: &[(usize, f64)]) -> Result<[f64; 3], ModelError> {
        let mut scores = self.class_log_priors;
        for &(col, value) in row {
            if value < 0.0 {
                return Err(ModelError::NegativeFeature(value));
            }
            for (c, score) in scores.iter_mut().enumerate() {
                *score += value * self.term_log_likelihoods[c][col];
            }
        }
        Ok(scores)
    }

    pub fn predict(&self, matrix: &SparseMatrix) -> Result<Vec<Label>, ModelError> {
        if matrix.n_cols != self.n_terms() {
            return Err(ModelError::WidthMismatch {
                expected: self.n_terms(),
                found: matrix.n_cols,
            });
        }
        matrix
            .rows
            .iter()
            .map(|row| self.joint_log_likelihood(row).map(|s| argmax_label(&s)))
            .collect()
    }
}
