//! Three-class softmax regression trained by full-batch gradient descent.

use serde::{Deserialize, Serialize};

use super::{argmax_label, check_lengths, uniform_width, ModelError};
use crate::corpus::Label;

/// Relative loss increase treated as floating-point noise.
const ROUNDOFF: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticHyperparams {
    pub learning_rate: f64,
    pub epochs: usize,
    /// L2 penalty on the weights (not the bias), `λ/2 · ‖W‖²`.
    pub l2: f64,
    /// Recorded for reproducibility; zero initialization with full-batch
    /// updates draws no random numbers.
    pub seed: u64,
}

impl Default for LogisticHyperparams {
    fn default() -> Self {
        LogisticHyperparams {
            learning_rate: 0.1,
            epochs: 500,
            l2: 1e-4,
            seed: 0,
        }
    }
}

impl LogisticHyperparams {
    fn validate(&self) -> Result<(), ModelError> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(ModelError::InvalidHyperparameter(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(ModelError::InvalidHyperparameter(
                "epochs must be at least 1".into(),
            ));
        }
        if !(self.l2 >= 0.0) || !self.l2.is_finite() {
            return Err(ModelError::InvalidHyperparameter(format!(
                "l2 penalty {} must be non-negative",
                self.l2
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticRegressionModel {
    /// `weights[class][feature]`
    pub weights: [Vec<f64>; 3],
    pub bias: [f64; 3],
    pub hyperparams: LogisticHyperparams,
    /// Objective at initialization, then after each applied update. Shorter
    /// than `epochs + 1` when descent stalled at rounding level.
    pub loss_history: Vec<f64>,
}

fn class_scores(weights: &[Vec<f64>; 3], bias: &[f64; 3], x: &[f64]) -> [f64; 3] {
    std::array::from_fn(|c| bias[c] + weights[c].iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
}

fn softmax(scores: [f64; 3]) -> [f64; 3] {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp = scores.map(|s| (s - max).exp());
    let total: f64 = exp.iter().sum();
    exp.map(|e| e / total)
}

/// Mean cross-entropy plus `λ/2 · ‖W‖²`, with its gradient in W and b.
pub fn loss_and_gradient<X: AsRef<[f64]>>(
    weights: &[Vec<f64>; 3],
    bias: &[f64; 3],
    features: &[X],
    labels: &[Label],
    l2: f64,
) -> (f64, [Vec<f64>; 3], [f64; 3]) {
    let n = features.len() as f64;
    let width = weights[0].len();
    let mut grad_w: [Vec<f64>; 3] = std::array::from_fn(|_| vec![0.0; width]);
    let mut grad_b = [0.0; 3];
    let mut loss = 0.0;
    for (row, label) in features.iter().zip(labels) {
        let x = row.as_ref();
        let scores = class_scores(weights, bias, x);
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_norm = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
        loss += log_norm - scores[label.index()];
        let probs = softmax(scores);
        for c in 0..3 {
            let residual = probs[c] - if c == label.index() { 1.0 } else { 0.0 };
            grad_b[c] += residual / n;
            for (g, v) in grad_w[c].iter_mut().zip(x) {
                *g += residual * v / n;
            }
        }
    }
    loss /= n;
    let mut penalty = 0.0;
    for c in 0..3 {
        for (g, w) in grad_w[c].iter_mut().zip(&weights[c]) {
            *g += l2 * w;
            penalty += w * w;
        }
    }
    (loss + 0.5 * l2 * penalty, grad_w, grad_b)
}

pub fn fit_logistic<X: AsRef<[f64]>>(
    features: &[X],
    labels: &[Label],
    hyperparams: LogisticHyperparams,
) -> Result<LogisticRegressionModel, ModelError> {
    hyperparams.validate()?;
    check_lengths(features, labels)?;
    let width = uniform_width(features)?;
    if width == 0 {
        return Err(ModelError::InvalidHyperparameter(
            "no feature columns".into(),
        ));
    }
    let mut weights: [Vec<f64>; 3] = std::array::from_fn(|_| vec![0.0; width]);
    let mut bias = [0.0; 3];
    let l2 = hyperparams.l2;
    let lr = hyperparams.learning_rate;
    let (mut loss, mut grad_w, mut grad_b) =
        loss_and_gradient(&weights, &bias, features, labels, l2);
    if !loss.is_finite() {
        return Err(ModelError::NonFinite);
    }
    let mut loss_history = Vec::with_capacity(hyperparams.epochs + 1);
    loss_history.push(loss);
    for _ in 0..hyperparams.epochs {
        let mut next_w = weights.clone();
        let mut next_b = bias;
        for c in 0..3 {
            next_b[c] -= lr * grad_b[c];
            for (w, g) in next_w[c].iter_mut().zip(&grad_w[c]) {
                *w -= lr * g;
            }
        }
        let (next_loss, next_gw, next_gb) =
            loss_and_gradient(&next_w, &next_b, features, labels, l2);
        if !next_loss.is_finite() || next_w.iter().flatten().any(|w| !w.is_finite()) {
            return Err(ModelError::NonFinite);
        }
        // A rise within rounding error means the minimum is reached.
        if next_loss > loss && next_loss - loss <= ROUNDOFF * loss.abs().max(1.0) {
            break;
        }
        (weights, bias, loss, grad_w, grad_b) = (next_w, next_b, next_loss, next_gw, next_gb);
        loss_history.push(loss);
    }
    Ok(LogisticRegressionModel {
        weights,
        bias,
        hyperparams,
        loss_history,
    })
}

impl LogisticRegressionModel {
    pub fn width(&self) -> usize {
        self.weights[0].len()
    }

    pub fn probabilities(&self, x: &[f64]) -> Result<[f64; 3], ModelError> {
        if x.len() != self.width() {
            return Err(ModelError::WidthMismatch {
                expected: self.width(),
                found: x.len(),
            });
        }
        Ok(softmax(class_scores(&self.weights, &self.bias, x)))
    }

    pub fn predict<X: AsRef<[f64]>>(&self, features: &[X]) -> Result<Vec<Label>, ModelError> {
        features
            .iter()
            .map(|row| {
                let x = row.as_ref();
                if x.len() != self.width() {
                    return Err(ModelError::WidthMismatch {
                        expected: self.width(),
                        found: x.len(),
                    });
                }
                Ok(argmax_label(&class_scores(&self.weights, &self.bias, x)))
            })
            .collect()
    }
}
