use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    GaussianNbModel, LinearRegressionModel, LogisticRegressionModel, ModelError,
    MultinomialNbModel, ThresholdCalibration,
};
use crate::preprocess::ContextMethod;
use crate::scores::TfidfVectorizer;

const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FittedHead {
    GaussianNb {
        model: GaussianNbModel,
    },
    MultinomialNb {
        model: MultinomialNbModel,
        vectorizer: TfidfVectorizer,
    },
    Logistic {
        model: LogisticRegressionModel,
    },
    LinearRegression {
        model: LinearRegressionModel,
        calibration: ThresholdCalibration,
    },
}

impl FittedHead {
    pub fn kind(&self) -> &'static str {
        match self {
            FittedHead::GaussianNb { .. } => "gaussian_nb",
            FittedHead::MultinomialNb { .. } => "multinomial_nb",
            FittedHead::Logistic { .. } => "logistic",
            FittedHead::LinearRegression { .. } => "linear_regression",
        }
    }
}

/// A fitted head plus the feature layout it expects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub column_names: Vec<String>,
    pub context_method: ContextMethod,
    pub head: FittedHead,
}

impl ModelFile {
    pub fn new(column_names: Vec<String>, context_method: ContextMethod, head: FittedHead) -> Self {
        ModelFile {
            format_version: FORMAT_VERSION,
            column_names,
            context_method,
            head,
        }
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("model serializes");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| ModelError::Format(e.to_string()))?;
        if file.format_version != FORMAT_VERSION {
            return Err(ModelError::Format(format!(
                "unsupported format version {}",
                file.format_version
            )));
        }
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ModelError::Format(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Rejects feature matrices laid out differently from the training one.
    pub fn check_columns(&self, column_names: &[String]) -> Result<(), ModelError> {
        if self.column_names != column_names {
            return Err(ModelError::ColumnMismatch {
                expected: self.column_names.clone(),
                found: column_names.to_vec(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Label;
    use crate::models::{calibrate_thresholds, fit_gaussian_nb, fit_linear, VARIANCE_FLOOR};

    #[test]
    fn json_round_trip_is_exact() {
        let x: Vec<[f64; 2]> = (0..9)
            .map(|i| [i as f64 / 7.0, (i * i) as f64 / 3.0])
            .collect();
        let y: Vec<Label> = (0..9).map(|i| Label::ALL[i / 3]).collect();
        let model = fit_linear(&x, &y).unwrap();
        let calibration = calibrate_thresholds(&model.predict(&x).unwrap(), &y).unwrap();
        let file = ModelFile::new(
            vec!["a".into(), "b".into()],
            ContextMethod::Full,
            FittedHead::LinearRegression { model, calibration },
        );
        let back = ModelFile::from_json(&file.to_json()).unwrap();
        assert_eq!(back, file);

        let nb = fit_gaussian_nb(&x, &y, VARIANCE_FLOOR).unwrap();
        let file = ModelFile::new(
            vec!["a".into(), "b".into()],
            ContextMethod::SentenceOnly,
            FittedHead::GaussianNb { model: nb },
        );
        assert_eq!(ModelFile::from_json(&file.to_json()).unwrap(), file);
        assert!(file.to_json().contains("\"type\": \"gaussian_nb\""));
    }

    #[test]
    fn column_check() {
        let x = [[0.0], [1.0], [2.0]];
        let y = [Label::Implausible, Label::Neutral, Label::Plausible];
        let nb = fit_gaussian_nb(&x, &y, VARIANCE_FLOOR).unwrap();
        let file = ModelFile::new(
            vec!["mlm_softmax".into()],
            ContextMethod::Full,
            FittedHead::GaussianNb { model: nb },
        );
        assert!(file.check_columns(&["mlm_softmax".to_string()]).is_ok());
        assert!(matches!(
            file.check_columns(&["mlm_logit".to_string()]),
            Err(ModelError::ColumnMismatch { .. })
        ));
    }

    #[test]
    fn rejects_garbage() {
        assert!(ModelFile::from_json("{}").is_err());
        assert!(ModelFile::from_json("not json").is_err());
    }
}
