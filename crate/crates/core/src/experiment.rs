//! Config-driven experiments: train a head on configured score sources,
//! predict, evaluate, and run grids of configs into one comparison table.
//!
//! A config is one JSON document. Relative paths inside it are resolved
//! against the directory of the file it was loaded from.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{load_dataset, CorpusError, Dataset, Label};
use crate::eval::{build_report, render_table, EvalError, EvaluationReport};
use crate::models::{
    calibrate_thresholds, fit_gaussian_nb, fit_linear, fit_logistic, fit_multinomial_nb,
    predict_labels_regression, FittedHead, LogisticHyperparams, ModelError, ModelFile,
    VARIANCE_FLOOR,
};
use crate::preprocess::{fill_placeholder, render_context, ContextMethod};
use crate::scores::{
    assemble_score_matrix, embedding_matrix, ngram_frequency, ContextualEmbeddings, EmbeddingTable,
    MlmLogitColumn, MlmScores, MlmSoftmaxColumn, NgramColumn, NgramTable, NgramTransform,
    RtdColumn, RtdIndex, ScoreColumn, ScoreError, ScoreMatrix, SimilarityColumn, SimilarityVariant,
    SimilarityWeighting, SparseMatrix, TfidfVectorizer,
};

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_ENV: &str = "CLOZE_OUTPUT_ROOT";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid config: {0}")]
    ConfigInvalid(String),
    #[error("head `{head}` cannot use source `{source_kind}`")]
    IncompatibleHeadSource { head: String, source_kind: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}: {source}")]
    Corpus { path: String, source: CorpusError },
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{path}, line {line}: {message}")]
    Predictions {
        path: String,
        line: usize,
        message: String,
    },
    #[error("grid entry `{entry}`: {source}")]
    Entry {
        entry: String,
        source: Box<ExperimentError>,
    },
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> ExperimentError {
    ExperimentError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), ExperimentError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceSpec {
    MlmLogit {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
    },
    MlmSoftmax {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
    },
    MlmSimilarity {
        path: PathBuf,
        embeddings: PathBuf,
        variant: SimilarityVariant,
        #[serde(default)]
        weighting: SimilarityWeighting,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
    },
    Ngram {
        path: PathBuf,
        #[serde(default)]
        transform: NgramTransform,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
    },
    Rtd {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
    },
    /// Sentence vectors: averaged static word vectors, optionally
    /// overridden per pair by contextual vectors.
    Embedding {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        table: Option<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        contextual: Option<PathBuf>,
    },
    Tfidf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SourceKind {
    Numeric,
    Embedding,
    Tfidf,
}

impl SourceSpec {
    fn kind(&self) -> SourceKind {
        match self {
            SourceSpec::Embedding { .. } => SourceKind::Embedding,
            SourceSpec::Tfidf => SourceKind::Tfidf,
            _ => SourceKind::Numeric,
        }
    }

    fn type_name(&self) -> &'static str {
        match self {
            SourceSpec::MlmLogit { .. } => "mlm_logit",
            SourceSpec::MlmSoftmax { .. } => "mlm_softmax",
            SourceSpec::MlmSimilarity { .. } => "mlm_similarity",
            SourceSpec::Ngram { .. } => "ngram",
            SourceSpec::Rtd { .. } => "rtd",
            SourceSpec::Embedding { .. } => "embedding",
            SourceSpec::Tfidf => "tfidf",
        }
    }

    /// Column name in the assembled score matrix.
    pub fn column_name(&self) -> String {
        let (explicit, default) = match self {
            SourceSpec::MlmLogit { name, .. } => (name, "mlm_logit"),
            SourceSpec::MlmSoftmax { name, .. } => (name, "mlm_softmax"),
            SourceSpec::MlmSimilarity { name, variant, .. } => (name, variant.column_name()),
            SourceSpec::Ngram {
                name, transform, ..
            } => (name, transform.column_name()),
            SourceSpec::Rtd { name, .. } => (name, "rtd"),
            SourceSpec::Embedding { .. } => (&None, "embedding"),
            SourceSpec::Tfidf => (&None, "tfidf"),
        };
        explicit.clone().unwrap_or_else(|| default.to_string())
    }

    fn paths_mut(&mut self) -> Vec<&mut PathBuf> {
        match self {
            SourceSpec::MlmLogit { path, .. }
            | SourceSpec::MlmSoftmax { path, .. }
            | SourceSpec::Ngram { path, .. }
            | SourceSpec::Rtd { path, .. } => vec![path],
            SourceSpec::MlmSimilarity {
                path, embeddings, ..
            } => vec![path, embeddings],
            SourceSpec::Embedding { table, contextual } => {
                table.iter_mut().chain(contextual.iter_mut()).collect()
            }
            SourceSpec::Tfidf => vec![],
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationSplit {
    #[default]
    Train,
    Dev,
}

fn default_variance_floor() -> f64 {
    VARIANCE_FLOOR
}

fn default_alpha() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LogisticSpec {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
}

impl Default for LogisticSpec {
    fn default() -> Self {
        let d = LogisticHyperparams::default();
        LogisticSpec {
            learning_rate: d.learning_rate,
            epochs: d.epochs,
            l2: d.l2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum HeadSpec {
    GaussianNb {
        #[serde(default = "default_variance_floor")]
        variance_floor: f64,
    },
    MultinomialNb {
        #[serde(default = "default_alpha")]
        alpha: f64,
    },
    Logistic(LogisticSpec),
    LinearRegression {
        #[serde(default)]
        calibrate_on: CalibrationSplit,
    },
}

impl HeadSpec {
    pub fn type_name(&self) -> &'static str {
        match self {
            HeadSpec::GaussianNb { .. } => "gaussian_nb",
            HeadSpec::MultinomialNb { .. } => "multinomial_nb",
            HeadSpec::Logistic(_) => "logistic",
            HeadSpec::LinearRegression { .. } => "linear_regression",
        }
    }

    fn accepts(&self, kind: SourceKind) -> bool {
        matches!(
            (self, kind),
            (HeadSpec::GaussianNb { .. }, SourceKind::Numeric)
                | (HeadSpec::LinearRegression { .. }, SourceKind::Numeric)
                | (HeadSpec::Logistic(_), SourceKind::Embedding)
                | (HeadSpec::MultinomialNb { .. }, SourceKind::Tfidf)
        )
    }
}

fn default_context_method() -> ContextMethod {
    ContextMethod::Full
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub train: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dev: Option<PathBuf>,
    #[serde(default = "default_context_method")]
    pub context_method: ContextMethod,
    pub sources: Vec<SourceSpec>,
    pub head: HeadSpec,
    #[serde(default)]
    pub zero_ngram_rule: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

fn resolve(base: &Path, path: &mut PathBuf) {
    if path.is_relative() {
        *path = base.join(&*path);
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        serde_json::from_str(text).map_err(|e| ExperimentError::ConfigInvalid(e.to_string()))
    }

    /// Reads a config and resolves its relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let mut config = Self::from_json(&text)?;
        config.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.train);
        if let Some(dev) = &mut self.dev {
            resolve(base, dev);
        }
        if let Some(out) = &mut self.output_dir {
            resolve(base, out);
        }
        for source in &mut self.sources {
            for path in source.paths_mut() {
                resolve(base, path);
            }
        }
    }

    /// Checks head/source compatibility, column uniqueness and that every
    /// referenced file exists.
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let invalid = |m: String| Err(ExperimentError::ConfigInvalid(m));
        if self.name.trim().is_empty() {
            return invalid("name must not be empty".into());
        }
        if self.sources.is_empty() {
            return invalid("at least one score source is required".into());
        }
        for source in &self.sources {
            if !self.head.accepts(source.kind()) {
                return Err(ExperimentError::IncompatibleHeadSource {
                    head: self.head.type_name().into(),
                    source_kind: source.type_name().into(),
                });
            }
            if let SourceSpec::Embedding {
                table: None,
                contextual: None,
            } = source
            {
                return invalid("embedding source needs a table or a contextual file".into());
            }
        }
        let single = matches!(
            self.head,
            HeadSpec::Logistic(_) | HeadSpec::MultinomialNb { .. }
        );
        if single && self.sources.len() != 1 {
            return invalid(format!(
                "head `{}` takes exactly one source",
                self.head.type_name()
            ));
        }
        let mut names = HashSet::new();
        for source in &self.sources {
            if !names.insert(source.column_name()) {
                return invalid(format!(
                    "duplicate column `{}`; set `name` on one of the sources",
                    source.column_name()
                ));
            }
        }
        if self.zero_ngram_rule {
            if !matches!(self.head, HeadSpec::LinearRegression { .. }) {
                return invalid(
                    "zero_ngram_rule applies to the linear_regression head only".into(),
                );
            }
            if !self
                .sources
                .iter()
                .any(|s| matches!(s, SourceSpec::Ngram { .. }))
            {
                return invalid("zero_ngram_rule needs an ngram source".into());
            }
        }
        if let HeadSpec::LinearRegression {
            calibrate_on: CalibrationSplit::Dev,
        } = self.head
        {
            if self.dev.is_none() {
                return invalid("calibrate_on = dev needs a dev dataset".into());
            }
        }
        let mut files: Vec<&PathBuf> = vec![&self.train];
        files.extend(&self.dev);
        let mut copy = self.sources.clone();
        let source_paths: Vec<PathBuf> = copy
            .iter_mut()
            .flat_map(|s| s.paths_mut().into_iter().map(|p| p.clone()))
            .collect();
        files.extend(&source_paths);
        for file in files {
            if !file.is_file() {
                return invalid(format!("file not found: {}", file.display()));
            }
        }
        Ok(())
    }

    /// Directory for this config's artifacts: explicit `output_dir`, else
    /// `<root>/<name>` with the root from the environment or `cloze-output`.
    pub fn output_dir(&self) -> PathBuf {
        self.output_dir
            .clone()
            .unwrap_or_else(|| output_root().join(&self.name))
    }
}

/// Default root for run artifacts: the environment override, else
/// `cloze-output` in the working directory.
pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("cloze-output"))
}

/// A validated config with its source files loaded.
pub struct Experiment {
    config: ExperimentConfig,
    columns: Vec<Box<dyn ScoreColumn>>,
    embedding: Option<(Option<EmbeddingTable>, Option<ContextualEmbeddings>)>,
    zero_rule_table: Option<NgramTable>,
}

fn load_labeled(path: &Path) -> Result<Dataset, ExperimentError> {
    load_dataset(path, true).map_err(|source| ExperimentError::Corpus {
        path: path.display().to_string(),
        source,
    })
}

impl Experiment {
    pub fn load(config: ExperimentConfig) -> Result<Self, ExperimentError> {
        config.validate()?;
        let mut columns: Vec<Box<dyn ScoreColumn>> = Vec::new();
        let mut embedding = None;
        let mut zero_rule_table = None;
        for source in &config.sources {
            let name = source.column_name();
            match source {
                SourceSpec::MlmLogit { path, .. } => columns.push(Box::new(MlmLogitColumn {
                    name,
                    scores: MlmScores::load(path)?,
                })),
                SourceSpec::MlmSoftmax { path, .. } => columns.push(Box::new(MlmSoftmaxColumn {
                    name,
                    scores: MlmScores::load(path)?,
                })),
                SourceSpec::MlmSimilarity {
                    path,
                    embeddings,
                    variant,
                    weighting,
                    ..
                } => columns.push(Box::new(SimilarityColumn {
                    name,
                    scores: MlmScores::load(path)?,
                    table: EmbeddingTable::load(embeddings)?,
                    variant: *variant,
                    weighting: *weighting,
                    method: config.context_method,
                })),
                SourceSpec::Ngram {
                    path, transform, ..
                } => {
                    let table = NgramTable::load(path)?;
                    if config.zero_ngram_rule && zero_rule_table.is_none() {
                        zero_rule_table = Some(table.clone());
                    }
                    columns.push(Box::new(NgramColumn {
                        name,
                        table,
                        transform: *transform,
                    }))
                }
                SourceSpec::Rtd { path, .. } => columns.push(Box::new(RtdColumn {
                    name,
                    index: RtdIndex::load(path)?,
                })),
                SourceSpec::Embedding { table, contextual } => {
                    embedding = Some((
                        table.as_deref().map(EmbeddingTable::load).transpose()?,
                        contextual
                            .as_deref()
                            .map(ContextualEmbeddings::load)
                            .transpose()?,
                    ))
                }
                SourceSpec::Tfidf => {}
            }
        }
        Ok(Experiment {
            config,
            columns,
            embedding,
            zero_rule_table,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    fn filled_texts(&self, dataset: &Dataset) -> Result<Vec<String>, ExperimentError> {
        dataset
            .pairs()
            .map(|(instance, candidate)| {
                fill_placeholder(
                    &render_context(instance, self.config.context_method),
                    &candidate.text,
                )
                .map_err(|e| ExperimentError::Score(e.into()))
            })
            .collect()
    }

    fn dense(&self, dataset: &Dataset) -> Result<ScoreMatrix, ExperimentError> {
        if let Some((table, contextual)) = &self.embedding {
            return Ok(embedding_matrix(
                dataset,
                self.config.context_method,
                table.as_ref(),
                contextual.as_ref(),
            )?);
        }
        let refs: Vec<&dyn ScoreColumn> = self.columns.iter().map(|c| c.as_ref()).collect();
        Ok(assemble_score_matrix(dataset, &refs)?)
    }

    fn sparse(
        &self,
        dataset: &Dataset,
        vectorizer: &TfidfVectorizer,
    ) -> Result<SparseMatrix, ExperimentError> {
        Ok(vectorizer.transform(&self.filled_texts(dataset)?))
    }

    /// Score matrix for `dataset` under this config's sources.
    pub fn score_matrix(&self, dataset: &Dataset) -> Result<ScoreMatrix, ExperimentError> {
        self.dense(dataset)
    }

    fn ngram_counts(&self, dataset: &Dataset) -> Option<Vec<u64>> {
        self.zero_rule_table.as_ref().map(|table| {
            dataset
                .pairs()
                .map(|(i, c)| ngram_frequency(table, i, c))
                .collect()
        })
    }

    /// Fits the configured head on the training dataset.
    pub fn train(&self) -> Result<ModelFile, ExperimentError> {
        let train = load_labeled(&self.config.train)?;
        let labels = gold_labels(&train, &self.config.train)?;
        let method = self.config.context_method;
        let file = match &self.config.head {
            HeadSpec::MultinomialNb { alpha } => {
                let vectorizer = TfidfVectorizer::fit(&self.filled_texts(&train)?)?;
                let x = self.sparse(&train, &vectorizer)?;
                let model = fit_multinomial_nb(&x, &labels, *alpha)?;
                ModelFile::new(
                    vec!["tfidf".into()],
                    method,
                    FittedHead::MultinomialNb { model, vectorizer },
                )
            }
            HeadSpec::GaussianNb { variance_floor } => {
                let x = self.dense(&train)?;
                let model = fit_gaussian_nb(&x.features(), &labels, *variance_floor)?;
                ModelFile::new(
                    x.column_names().to_vec(),
                    method,
                    FittedHead::GaussianNb { model },
                )
            }
            HeadSpec::Logistic(spec) => {
                let x = self.dense(&train)?;
                let hyperparams = LogisticHyperparams {
                    learning_rate: spec.learning_rate,
                    epochs: spec.epochs,
                    l2: spec.l2,
                    seed: self.config.seed,
                };
                let model = fit_logistic(&x.features(), &labels, hyperparams)?;
                ModelFile::new(
                    x.column_names().to_vec(),
                    method,
                    FittedHead::Logistic { model },
                )
            }
            HeadSpec::LinearRegression { calibrate_on } => {
                let x = self.dense(&train)?;
                let model = fit_linear(&x.features(), &labels)?;
                let calibration = match calibrate_on {
                    CalibrationSplit::Train => {
                        calibrate_thresholds(&model.predict(&x.features())?, &labels)?
                    }
                    CalibrationSplit::Dev => {
                        let path = self.config.dev.as_ref().expect("validated");
                        let dev = load_labeled(path)?;
                        let dev_labels = gold_labels(&dev, path)?;
                        let dev_x = self.dense(&dev)?;
                        calibrate_thresholds(&model.predict(&dev_x.features())?, &dev_labels)?
                    }
                }
                .with_zero_ngram_rule(self.config.zero_ngram_rule);
                ModelFile::new(
                    x.column_names().to_vec(),
                    method,
                    FittedHead::LinearRegression { model, calibration },
                )
            }
        };
        Ok(file)
    }

    /// Labels for every pair of `dataset`, in dataset order.
    pub fn predict(
        &self,
        model: &ModelFile,
        dataset: &Dataset,
    ) -> Result<Vec<Prediction>, ExperimentError> {
        if model.head.kind() != self.config.head.type_name() {
            return Err(ExperimentError::ConfigInvalid(format!(
                "model head `{}` does not match config head `{}`",
                model.head.kind(),
                self.config.head.type_name()
            )));
        }
        if model.context_method != self.config.context_method {
            return Err(ExperimentError::ConfigInvalid(format!(
                "model was trained with context method `{}`, config uses `{}`",
                model.context_method, self.config.context_method
            )));
        }
        let labels = match &model.head {
            FittedHead::MultinomialNb {
                model: nb,
                vectorizer,
            } => {
                model.check_columns(&["tfidf".to_string()])?;
                let x = self.sparse(dataset, vectorizer)?;
                nb.predict(&x)?
            }
            FittedHead::GaussianNb { model: nb } => {
                let x = self.dense(dataset)?;
                model.check_columns(x.column_names())?;
                nb.predict(&x.features())?.labels
            }
            FittedHead::Logistic { model: lr } => {
                let x = self.dense(dataset)?;
                model.check_columns(x.column_names())?;
                lr.predict(&x.features())?
            }
            FittedHead::LinearRegression {
                model: lin,
                calibration,
            } => {
                let x = self.dense(dataset)?;
                model.check_columns(x.column_names())?;
                let counts = self.ngram_counts(dataset);
                predict_labels_regression(lin, calibration, &x.features(), counts.as_deref())?
            }
        };
        Ok(dataset
            .pairs()
            .zip(labels)
            .map(|((instance, candidate), label)| Prediction {
                instance_id: instance.id.clone(),
                candidate_id: candidate.candidate_id,
                label,
            })
            .collect())
    }

    /// The dataset predictions are scored on: dev if configured, else train.
    pub fn evaluation_dataset(&self) -> Result<Dataset, ExperimentError> {
        load_labeled(self.config.dev.as_ref().unwrap_or(&self.config.train))
    }
}

fn gold_labels(dataset: &Dataset, path: &Path) -> Result<Vec<Label>, ExperimentError> {
    dataset.gold_labels().ok_or_else(|| {
        ExperimentError::ConfigInvalid(format!("{} has unlabeled candidates", path.display()))
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub instance_id: String,
    pub candidate_id: u8,
    pub label: Label,
}

pub const PREDICTIONS_HEADER: &str = "instance_id\tcandidate_id\tlabel";

pub fn write_predictions(predictions: &[Prediction]) -> String {
    let mut out = String::from(PREDICTIONS_HEADER);
    out.push('\n');
    for p in predictions {
        let _ = writeln!(out, "{}\t{}\t{}", p.instance_id, p.candidate_id, p.label);
    }
    out
}

pub fn parse_predictions(
    text: &str,
    source_name: &str,
) -> Result<Vec<Prediction>, ExperimentError> {
    let err = |line: usize, message: String| ExperimentError::Predictions {
        path: source_name.to_string(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, header)) if header.trim_end() == PREDICTIONS_HEADER => {}
        _ => return Err(err(1, format!("expected header `{PREDICTIONS_HEADER}`"))),
    }
    let mut out = Vec::new();
    for (line_no, line) in lines {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let [id, cid, label] = line.split('\t').collect::<Vec<_>>()[..] else {
            return Err(err(line_no, "expected 3 fields".into()));
        };
        out.push(Prediction {
            instance_id: id.to_string(),
            candidate_id: cid
                .parse()
                .map_err(|_| err(line_no, format!("bad candidate id `{cid}`")))?,
            label: label
                .parse()
                .map_err(|bad| err(line_no, format!("bad label `{bad}`")))?,
        });
    }
    Ok(out)
}

/// Aligns predictions to the gold dataset's pair order and scores them.
pub fn evaluate_predictions(
    predictions: &[Prediction],
    gold: &Dataset,
) -> Result<EvaluationReport, ExperimentError> {
    let by_key: std::collections::HashMap<(&str, u8), Label> = predictions
        .iter()
        .map(|p| ((p.instance_id.as_str(), p.candidate_id), p.label))
        .collect();
    if by_key.len() != predictions.len() {
        return Err(ExperimentError::ConfigInvalid(
            "duplicate prediction rows".into(),
        ));
    }
    let mut pred = Vec::new();
    let mut gold_labels = Vec::new();
    for (instance, candidate) in gold.pairs() {
        let label = by_key
            .get(&(instance.id.as_str(), candidate.candidate_id))
            .ok_or_else(|| {
                ExperimentError::ConfigInvalid(format!(
                    "no prediction for instance {}, candidate {}",
                    instance.id, candidate.candidate_id
                ))
            })?;
        pred.push(*label);
        gold_labels.push(candidate.gold_label.ok_or_else(|| {
            ExperimentError::ConfigInvalid(format!("instance {} is unlabeled", instance.id))
        })?);
    }
    if pred.len() != predictions.len() {
        return Err(ExperimentError::ConfigInvalid(format!(
            "{} predictions for {} gold pairs",
            predictions.len(),
            pred.len()
        )));
    }
    let scores = gold.gold_scores();
    Ok(build_report(&pred, &gold_labels, scores.as_deref())?)
}

/// A list of experiment configs run side by side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub entries: Vec<ExperimentConfig>,
}

impl GridSpec {
    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let mut grid: GridSpec = serde_json::from_str(&text)
            .map_err(|e| ExperimentError::ConfigInvalid(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        grid.entries.iter_mut().for_each(|c| c.resolve_paths(base));
        Ok(grid)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.entries.is_empty() {
            return Err(ExperimentError::ConfigInvalid("grid has no entries".into()));
        }
        let mut names = HashSet::new();
        for entry in &self.entries {
            if !names.insert(entry.name.as_str()) {
                return Err(ExperimentError::ConfigInvalid(format!(
                    "duplicate grid entry name `{}`",
                    entry.name
                )));
            }
            entry.validate().map_err(|e| ExperimentError::Entry {
                entry: entry.name.clone(),
                source: Box::new(e),
            })?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub name: String,
    pub report: EvaluationReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridOutcome {
    pub rows: Vec<GridRow>,
    pub table: String,
    pub json: String,
}

fn entry_dir_name(index: usize, name: &str) -> String {
    let safe: String = name
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{index:02}_{safe}")
}

/// Artifacts of one train → persist → reload → predict → evaluate run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifacts {
    pub model_json: String,
    pub predictions_tsv: String,
    pub report: EvaluationReport,
}

/// Trains, round-trips the model through its JSON form, predicts on the
/// evaluation dataset and scores the predictions.
pub fn run_single(config: &ExperimentConfig) -> Result<RunArtifacts, ExperimentError> {
    let experiment = Experiment::load(config.clone())?;
    let model_json = experiment.train()?.to_json();
    let model = ModelFile::from_json(&model_json)?;
    let eval_set = experiment.evaluation_dataset()?;
    let predictions = experiment.predict(&model, &eval_set)?;
    let report = evaluate_predictions(&predictions, &eval_set)?;
    Ok(RunArtifacts {
        model_json,
        predictions_tsv: write_predictions(&predictions),
        report,
    })
}

/// Runs every grid entry (in parallel), writes each entry's artifacts under
/// `out_dir/NN_name/`, then the combined `comparison.txt` and
/// `comparison.json`. Row order follows entry order.
pub fn run_grid(grid: &GridSpec, out_dir: &Path) -> Result<GridOutcome, ExperimentError> {
    grid.validate()?;
    let results: Vec<Result<GridRow, ExperimentError>> = grid
        .entries
        .par_iter()
        .enumerate()
        .map(|(index, config)| {
            let wrap = |e| ExperimentError::Entry {
                entry: config.name.clone(),
                source: Box::new(e),
            };
            let artifacts = run_single(config).map_err(wrap)?;
            let dir = out_dir.join(entry_dir_name(index, &config.name));
            write_file(&dir.join("model.json"), &artifacts.model_json)?;
            write_file(&dir.join("predictions.tsv"), &artifacts.predictions_tsv)?;
            write_file(&dir.join("report.json"), &artifacts.report.to_json())?;
            write_file(
                &dir.join("report.txt"),
                &artifacts.report.render(&config.name),
            )?;
            Ok(GridRow {
                name: config.name.clone(),
                report: artifacts.report,
            })
        })
        .collect();
    let rows = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let table = render_table(
        &rows
            .iter()
            .map(|r| (r.name.clone(), r.report.clone()))
            .collect::<Vec<_>>(),
    );
    let mut json = serde_json::to_string_pretty(&rows).expect("rows serialize");
    json.push('\n');
    write_file(&out_dir.join("comparison.txt"), &table)?;
    write_file(&out_dir.join("comparison.json"), &json)?;
    Ok(GridOutcome { rows, table, json })
}

/// Writes `model.json` for a config into `out_dir`.
pub fn train_to_dir(config: &ExperimentConfig, out_dir: &Path) -> Result<PathBuf, ExperimentError> {
    let model = Experiment::load(config.clone())?.train()?;
    let path = out_dir.join("model.json");
    write_file(&path, &model.to_json())?;
    Ok(path)
}

/// Predicts `dataset` (or the config's evaluation dataset) with a saved model
/// and writes the predictions TSV to `out_path`.
pub fn predict_to_file(
    config: &ExperimentConfig,
    model_path: &Path,
    dataset: Option<&Path>,
    out_path: &Path,
) -> Result<usize, ExperimentError> {
    let experiment = Experiment::load(config.clone())?;
    let model = ModelFile::load(model_path)?;
    let data = match dataset {
        Some(path) => load_dataset(path, false).map_err(|source| ExperimentError::Corpus {
            path: path.display().to_string(),
            source,
        })?,
        None => experiment.evaluation_dataset()?,
    };
    let predictions = experiment.predict(&model, &data)?;
    write_file(out_path, &write_predictions(&predictions))?;
    Ok(predictions.len())
}

/// Scores a predictions file against a labeled dataset and writes
/// `report.txt` and `report.json` into `out_dir`.
pub fn evaluate_to_dir(
    predictions_path: &Path,
    gold_path: &Path,
    out_dir: &Path,
    method_name: &str,
) -> Result<EvaluationReport, ExperimentError> {
    let text = fs::read_to_string(predictions_path).map_err(|e| io_err(predictions_path, e))?;
    let predictions = parse_predictions(&text, &predictions_path.display().to_string())?;
    let gold = load_labeled(gold_path)?;
    let report = evaluate_predictions(&predictions, &gold)?;
    write_file(&out_dir.join("report.json"), &report.to_json())?;
    write_file(&out_dir.join("report.txt"), &report.render(method_name))?;
    Ok(report)
}
