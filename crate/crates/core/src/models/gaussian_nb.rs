use serde::{Deserialize, Serialize};

use super::{argmax_label, check_lengths, class_counts, uniform_width, ModelError};
use crate::corpus::Label;

/// Smallest per-feature variance a class may carry.
pub const VARIANCE_FLOOR: f64 = 1e-9;

/// Per-class independent normal densities over continuous score features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianNbModel {
    pub class_priors: [f64; 3],
    /// `means[class][feature]`
    pub means: [Vec<f64>; 3],
    /// `variances[class][feature]`, each at least the floor.
    pub variances: [Vec<f64>; 3],
    pub variance_floor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianNbPrediction {
    pub labels: Vec<Label>,
    pub posteriors: Vec<[f64; 3]>,
}

/// Maximum-likelihood fit: class frequencies as priors, per-class feature
/// means and (biased) variances clamped to `variance_floor`.
pub fn fit_gaussian_nb<X: AsRef<[f64]>>(
    features: &[X],
    labels: &[Label],
    variance_floor: f64,
) -> Result<GaussianNbModel, ModelError> {
    check_lengths(features, labels)?;
    if !(variance_floor > 0.0) {
        return Err(ModelError::InvalidHyperparameter(format!(
            "variance floor {variance_floor} must be positive"
        )));
    }
    let width = uniform_width(features)?;
    let counts = class_counts(labels)?;
    let n = labels.len() as f64;

    let mut means: [Vec<f64>; 3] = std::array::from_fn(|_| vec![0.0; width]);
    for (row, label) in features.iter().zip(labels) {
        for (m, x) in means[label.index()].iter_mut().zip(row.as_ref()) {
            *m += x;
        }
    }
    for (class, m) in means.iter_mut().enumerate() {
        m.iter_mut().for_each(|v| *v /= counts[class] as f64);
    }

    let mut variances: [Vec<f64>; 3] = std::array::from_fn(|_| vec![0.0; width]);
    for (row, label) in features.iter().zip(labels) {
        let c = label.index();
        for ((v, x), m) in variances[c].iter_mut().zip(row.as_ref()).zip(&means[c]) {
            *v += (x - m) * (x - m);
        }
    }
    for (class, v) in variances.iter_mut().enumerate() {
        v.iter_mut()
            .for_each(|x| *x = (*x / counts[class] as f64).max(variance_floor));
    }

    Ok(GaussianNbModel {
        class_priors: std::array::from_fn(|c| counts[c] as f64 / n),
        means,
        variances,
        variance_floor,
    })
}

impl GaussianNbModel {
    pub fn width(&self) -> usize {
        self.means[0].len()
    }

    /// Unnormalized log joint `ln P(class) + Σ ln N(x_f; μ, σ²)` per class.
    pub fn joint_log_likelihood(&self, x: &[f64]) -> Result<[f64; 3], ModelError> {
        if x.len() != self.width() {
            return Err(ModelError::WidthMismatch {
                expected: self.width(),
                found: x.len(),
            });
        }
        Ok(std::array::from_fn(|c| {
            let log_density: f64 = x
                .iter()
                .zip(&self.means[c])
                .zip(&self.variances[c])
                .map(|((x, m), v)| {
                    -0.5 * (2.0 * std::f64::consts::PI * v).ln() - (x - m) * (x - m) / (2.0 * v)
                })
                .sum();
            self.class_priors[c].ln() + log_density
        }))
    }

    /// Posterior class probabilities, normalized in log space.
    pub fn posterior(&self, x: &[f64]) -> Result<[f64; 3], ModelError> {
        let joint = self.joint_log_likelihood(x)?;
        let max = joint.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let shifted = joint.map(|j| (j - max).exp());
        let total: f64 = shifted.iter().sum();
        Ok(shifted.map(|s| s / total))
    }

    pub fn predict<X: AsRef<[f64]>>(
        &self,
        features: &[X],
    ) -> Result<GaussianNbPrediction, ModelError> {
        let mut labels = Vec::with_capacity(features.len());
        let mut posteriors = Vec::with_capacity(features.len());
        for row in features {
            let joint = self.joint_log_likelihood(row.as_ref())?;
            labels.push(argmax_label(&joint));
            posteriors.push(self.posterior(row.as_ref())?);
        }
        Ok(GaussianNbPrediction { labels, posteriors })
    }
}
