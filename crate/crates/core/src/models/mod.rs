//! Classification and regression heads fitted on score features.
//!
//! Every head orders classes by [`Label::index`] and breaks argmax ties
//! toward the lower ordinal class.

mod gaussian_nb;
mod linear;
mod logistic;
mod multinomial_nb;
mod persist;

use thiserror::Error;

use crate::corpus::Label;

pub use gaussian_nb::{fit_gaussian_nb, GaussianNbModel, GaussianNbPrediction, VARIANCE_FLOOR};
pub use linear::{
    calibrate_thresholds, fit_linear, fit_linear_targets, predict_labels_regression,
    LinearRegressionModel, ThresholdCalibration, RIDGE_FALLBACK,
};
pub use logistic::{fit_logistic, loss_and_gradient, LogisticHyperparams, LogisticRegressionModel};
pub use multinomial_nb::{fit_multinomial_nb, MultinomialNbModel};
pub use persist::{FittedHead, ModelFile};

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("no training samples of class {0}")]
    MissingClass(Label),
    #[error("feature width {found} does not match the model's {expected}")]
    WidthMismatch { expected: usize, found: usize },
    #[error("{features} feature rows but {labels} labels")]
    LengthMismatch { features: usize, labels: usize },
    #[error("no training samples")]
    Empty,
    #[error("negative feature value {0}")]
    NegativeFeature(f64),
    #[error("training diverged to a non-finite value")]
    NonFinite,
    #[error("design matrix is rank deficient")]
    RankDeficient,
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),
    #[error("model was fitted on columns {expected:?}, got {found:?}")]
    ColumnMismatch {
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("model file: {0}")]
    Format(String),
}

/// Index of the largest score; the first (lowest ordinal) wins ties.
pub(crate) fn argmax_label(scores: &[f64; 3]) -> Label {
    let mut best = 0;
    for i in 1..3 {
        if scores[i] > scores[best] {
            best = i;
        }
    }
    Label::from_index(best).expect("three classes")
}

pub(crate) fn check_lengths<X>(features: &[X], labels: &[Label]) -> Result<(), ModelError> {
    if features.len() != labels.len() {
        return Err(ModelError::LengthMismatch {
            features: features.len(),
            labels: labels.len(),
        });
    }
    if features.is_empty() {
        return Err(ModelError::Empty);
    }
    Ok(())
}

/// Common feature width of all rows.
pub(crate) fn uniform_width<X: AsRef<[f64]>>(features: &[X]) -> Result<usize, ModelError> {
    let width = features.first().map_or(0, |r| r.as_ref().len());
    for row in features {
        if row.as_ref().len() != width {
            return Err(ModelError::WidthMismatch {
                expected: width,
                found: row.as_ref().len(),
            });
        }
    }
    Ok(width)
}

pub(crate) fn class_counts(labels: &[Label]) -> Result<[usize; 3], ModelError> {
    let mut counts = [0usize; 3];
    for l in labels {
        counts[l.index()] += 1;
    }
    for label in Label::ALL {
        if counts[label.index()] == 0 {
            return Err(ModelError::MissingClass(label));
        }
    }
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_go_to_lower_class() {
        assert_eq!(argmax_label(&[1.0, 1.0, 1.0]), Label::Implausible);
        assert_eq!(argmax_label(&[0.0, 2.0, 2.0]), Label::Neutral);
        assert_eq!(argmax_label(&[0.0, 1.0, 2.0]), Label::Plausible);
    }
}
