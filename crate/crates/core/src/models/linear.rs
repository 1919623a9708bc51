//! Least-squares regression onto ordinal targets and the two cut-points that
//! turn its output back into labels.

use serde::{Deserialize, Serialize};

use super::{check_lengths, class_counts, uniform_width, ModelError};
use crate::corpus::{label_to_score, Label};

/// Ridge term added to the normal equations when they are near singular.
pub const RIDGE_FALLBACK: f64 = 1e-8;

const PIVOT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearRegressionModel {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    /// Whether the ridge fallback was needed to solve.
    pub ridge: bool,
}

/// Solves `A x = b` for symmetric `A` by Cholesky. Pivots at or below
/// `tolerance` are treated as singular.
fn cholesky_solve(a: &[Vec<f64>], b: &[f64], tolerance: f64) -> Option<Vec<f64>> {
    let n = b.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let dot: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let pivot = a[i][i] - dot;
                if !(pivot > tolerance) || !pivot.is_finite() {
                    return None;
                }
                l[i][i] = pivot.sqrt();
            } else {
                l[i][j] = (a[i][j] - dot) / l[j][j];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let dot: f64 = (0..i).map(|k| l[i][k] * y[k]).sum();
        y[i] = (b[i] - dot) / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let dot: f64 = (i + 1..n).map(|k| l[k][i] * x[k]).sum();
        x[i] = (y[i] - dot) / l[i][i];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// OLS with an intercept against arbitrary real targets.
pub fn fit_linear_targets<X: AsRef<[f64]>>(
    features: &[X],
    targets: &[f64],
) -> Result<LinearRegressionModel, ModelError> {
    if features.len() != targets.len() {
        return Err(ModelError::LengthMismatch {
            features: features.len(),
            labels: targets.len(),
        });
    }
    let width = uniform_width(features)?;
    if features.len() <= width {
        return Err(ModelError::RankDeficient);
    }
    // design column 0 is the intercept
    let p = width + 1;
    let mut gram = vec![vec![0.0; p]; p];
    let mut moment = vec![0.0; p];
    for (row, &t) in features.iter().zip(targets) {
        let x: Vec<f64> = std::iter::once(1.0)
            .chain(row.as_ref().iter().copied())
            .collect();
        for i in 0..p {
            moment[i] += x[i] * t;
            for j in 0..=i {
                gram[i][j] += x[i] * x[j];
            }
        }
    }
    for i in 0..p {
        for j in 0..i {
            gram[j][i] = gram[i][j];
        }
    }
    let scale = gram
        .iter()
        .enumerate()
        .map(|(i, r)| r[i])
        .fold(1.0, f64::max);
    let (solution, ridge) = match cholesky_solve(&gram, &moment, PIVOT_TOLERANCE * scale) {
        Some(s) => (s, false),
        None => {
            for (i, row) in gram.iter_mut().enumerate() {
                row[i] += RIDGE_FALLBACK;
            }
            let s = cholesky_solve(&gram, &moment, 0.0).ok_or(ModelError::RankDeficient)?;
            (s, true)
        }
    };
    Ok(LinearRegressionModel {
        intercept: solution[0],
        coefficients: solution[1..].to_vec(),
        ridge,
    })
}

/// OLS onto the ordinal scores 1 / 3 / 5 of the labels.
pub fn fit_linear<X: AsRef<[f64]>>(
    features: &[X],
    labels: &[Label],
) -> Result<LinearRegressionModel, ModelError> {
    check_lengths(features, labels)?;
    let targets: Vec<f64> = labels.iter().map(|l| label_to_score(*l)).collect();
    fit_linear_targets(features, &targets)
}

impl LinearRegressionModel {
    pub fn width(&self) -> usize {
        self.coefficients.len()
    }

    pub fn predict_one(&self, x: &[f64]) -> Result<f64, ModelError> {
        if x.len() != self.width() {
            return Err(ModelError::WidthMismatch {
                expected: self.width(),
                found: x.len(),
            });
        }
        Ok(self.intercept
            + self
                .coefficients
                .iter()
                .zip(x)
                .map(|(c, v)| c * v)
                .sum::<f64>())
    }

    pub fn predict<X: AsRef<[f64]>>(&self, features: &[X]) -> Result<Vec<f64>, ModelError> {
        features
            .iter()
            .map(|r| self.predict_one(r.as_ref()))
            .collect()
    }
}

/// Cut-points chosen so that the training predictions reproduce the
/// training label distribution: `value < t1` is implausible, `value < t2`
/// neutral, anything else plausible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCalibration {
    pub t1: f64,
    pub t2: f64,
    /// Force implausible whenever the candidate's n-gram count is zero.
    pub zero_ngram_rule: bool,
    /// Class proportions of the labels the thresholds were fitted on.
    pub class_proportions: [f64; 3],
}

/// A cut strictly above `low` and at most `high`. Equal neighbours give a
/// cut equal to both, which sends all tied values upward.
fn cut_between(low: f64, high: f64) -> f64 {
    if low >= high {
        return low;
    }
    let mid = low + (high - low) / 2.0;
    if mid > low {
        mid
    } else {
        high
    }
}

pub fn calibrate_thresholds(
    predictions: &[f64],
    labels: &[Label],
) -> Result<ThresholdCalibration, ModelError> {
    check_lengths(predictions, labels)?;
    let counts = class_counts(labels)?;
    let mut sorted = predictions.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n_neg = counts[Label::Implausible.index()];
    let n_low = n_neg + counts[Label::Neutral.index()];
    let t1 = cut_between(sorted[n_neg - 1], sorted[n_neg]);
    let t2 = cut_between(sorted[n_low - 1], sorted[n_low]);
    let n = labels.len() as f64;
    Ok(ThresholdCalibration {
        t1,
        t2,
        zero_ngram_rule: false,
        class_proportions: counts.map(|c| c as f64 / n),
    })
}

impl ThresholdCalibration {
    pub fn with_zero_ngram_rule(mut self, on: bool) -> Self {
        self.zero_ngram_rule = on;
        self
    }

    pub fn classify(&self, value: f64) -> Label {
        if value < self.t1 {
            Label::Implausible
        } else if value < self.t2 {
            Label::Neutral
        } else {
            Label::Plausible
        }
    }
}

/// Regression output mapped through the thresholds, with the zero n-gram
/// override applied when the calibration enables it and counts are given.
pub fn predict_labels_regression<X: AsRef<[f64]>>(
    model: &LinearRegressionModel,
    calibration: &ThresholdCalibration,
    features: &[X],
    ngram_counts: Option<&[u64]>,
) -> Result<Vec<Label>, ModelError> {
    let values = model.predict(features)?;
    if let Some(counts) = ngram_counts {
        if counts.len() != values.len() {
            return Err(ModelError::LengthMismatch {
                features: values.len(),
                labels: counts.len(),
            });
        }
    }
    Ok(values
        .iter()
        .enumerate()
        .map(|(i, &v)| match ngram_counts {
            Some(counts) if calibration.zero_ngram_rule && counts[i] == 0 => Label::Implausible,
            _ => calibration.classify(v),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use Label::*;

    #[test]
    fn exact_line() {
        let x: Vec<[f64; 1]> = (0..10).map(|i| [i as f64 * 0.5]).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v[0] + 1.0).collect();
        let m = fit_linear_targets(&x, &y).unwrap();
        assert!((m.coefficients[0] - 2.0).abs() < 1e-9);
        assert!((m.intercept - 1.0).abs() < 1e-9);
        assert!(!m.ridge);
    }

    #[test]
    fn duplicated_column_uses_ridge() {
        let x: Vec<[f64; 3]> = (0..12).map(|i| [i as f64, 4.0, 4.0]).collect();
        let y: Vec<f64> = (0..12).map(|i| i as f64 * 0.3 + 1.0).collect();
        let m = fit_linear_targets(&x, &y).unwrap();
        assert!(m.ridge);
        assert!(m.coefficients.iter().all(|c| c.is_finite()));
        assert!(m.intercept.is_finite());
        for (row, t) in x.iter().zip(&y) {
            assert!((m.predict_one(row).unwrap() - t).abs() < 1e-4);
        }
    }

    #[test]
    fn too_few_rows() {
        let x = [[1.0, 2.0], [3.0, 4.0]];
        assert_eq!(
            fit_linear_targets(&x, &[1.0, 2.0]),
            Err(ModelError::RankDeficient)
        );
    }

    #[test]
    fn residuals_orthogonal_to_design() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x: Vec<Vec<f64>> = (0..80)
            .map(|_| (0..3).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let y: Vec<Label> = (0..80).map(|i| Label::ALL[(i * 7) % 3]).collect();
        let m = fit_linear(&x, &y).unwrap();
        let resid: Vec<f64> = x
            .iter()
            .zip(&y)
            .map(|(r, l)| label_to_score(*l) - m.predict_one(r).unwrap())
            .collect();
        assert!(resid.iter().sum::<f64>().abs() < 1e-8);
        for f in 0..3 {
            let dot: f64 = x.iter().zip(&resid).map(|(r, e)| r[f] * e).sum();
            assert!(dot.abs() < 1e-8, "feature {f}: {dot}");
        }
    }

    #[test]
    fn thresholds_by_hand() {
        let preds = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let labels = [
            Implausible,
            Implausible,
            Neutral,
            Neutral,
            Plausible,
            Plausible,
        ];
        let cal = calibrate_thresholds(&preds, &labels).unwrap();
        assert_eq!((cal.t1, cal.t2), (2.5, 4.5));
        assert_eq!(cal.classify(2.4), Implausible);
        assert_eq!(cal.classify(2.5), Neutral);
        assert_eq!(cal.classify(4.5), Plausible);
        assert_eq!(cal.class_proportions, [1.0 / 3.0; 3]);
    }

    #[test]
    fn tied_boundary_goes_up() {
        // 2 negatives, but the 2nd and 3rd smallest predictions tie
        let preds = [1.0, 2.0, 2.0, 4.0, 5.0, 6.0];
        let labels = [
            Implausible,
            Implausible,
            Neutral,
            Neutral,
            Plausible,
            Plausible,
        ];
        let cal = calibrate_thresholds(&preds, &labels).unwrap();
        assert_eq!(cal.t1, 2.0);
        let predicted: Vec<Label> = preds.iter().map(|p| cal.classify(*p)).collect();
        let counts = crate::corpus::LabelCounts::from_labels(&predicted);
        // one negative is lost to the tie: slack equals the tied count below the cut
        assert_eq!(counts.0, [1, 3, 2]);
    }

    #[test]
    fn adjacent_floats_still_split() {
        let a = 1.0f64;
        let b = f64::from_bits(a.to_bits() + 1);
        let preds = [0.0, a, b, 3.0];
        let labels = [Implausible, Implausible, Neutral, Plausible];
        let cal = calibrate_thresholds(&preds, &labels).unwrap();
        let predicted: Vec<Label> = preds.iter().map(|p| cal.classify(*p)).collect();
        assert_eq!(predicted, labels);
    }

    #[test]
    fn zero_ngram_rule_overrides() {
        let model = LinearRegressionModel {
            coefficients: vec![1.0],
            intercept: 0.0,
            ridge: false,
        };
        let cal = ThresholdCalibration {
            t1: 2.0,
            t2: 4.0,
            zero_ngram_rule: true,
            class_proportions: [0.4, 0.2, 0.4],
        };
        let x = [[1.0], [5.0], [5.0], [2.0]];
        let counts = [3, 0, 7, 1];
        assert_eq!(
            predict_labels_regression(&model, &cal, &x, Some(&counts)).unwrap(),
            vec![Implausible, Implausible, Plausible, Neutral]
        );
        assert_eq!(
            predict_labels_regression(&model, &cal, &x, None).unwrap(),
            vec![Implausible, Plausible, Plausible, Neutral]
        );
        let off = cal.clone().with_zero_ngram_rule(false);
        assert_eq!(
            predict_labels_regression(&model, &off, &x, Some(&counts)).unwrap(),
            vec![Implausible, Plausible, Plausible, Neutral]
        );
    }

    proptest! {
        #[test]
        fn distinct_predictions_reproduce_proportions(
            counts in (1usize..20, 1usize..20, 1usize..20),
            seed in any::<u64>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut labels: Vec<Label> = std::iter::repeat_n(Implausible, counts.0)
                .chain(std::iter::repeat_n(Neutral, counts.1))
                .chain(std::iter::repeat_n(Plausible, counts.2))
                .collect();
            use rand::seq::SliceRandom;
            labels.shuffle(&mut rng);
            let preds: Vec<f64> = (0..labels.len()).map(|_| rng.random_range(-10.0..10.0)).collect();
            let cal = calibrate_thresholds(&preds, &labels).unwrap();
            prop_assert!(cal.t1 <= cal.t2);
            let predicted: Vec<Label> = preds.iter().map(|p| cal.classify(*p)).collect();
            prop_assert_eq!(
                crate::corpus::LabelCounts::from_labels(&predicted),
                crate::corpus::LabelCounts::from_labels(&labels)
            );
        }

        #[test]
        fn classification_is_monotone(t1 in -5.0f64..5.0, gap in 0.0f64..5.0, a in -12.0f64..12.0, b in -12.0f64..12.0) {
            let cal = ThresholdCalibration { t1, t2: t1 + gap, zero_ngram_rule: false, class_proportions: [0.0; 3] };
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(cal.classify(lo) <= cal.classify(hi));
        }
    }
}
