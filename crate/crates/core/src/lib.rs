//! Plausibility classification for cloze-task fillers.
//!
//! Raw signals computed offline (masked-LM logits, n-gram counts, word
//! vectors, replaced-token-detection probabilities, tf-idf) are translated
//! into per-candidate features, fed to small classification or regression
//! heads, and evaluated with ordinal-aware metrics.
//!
//! - [`corpus`]: instances, labels, dataset TSV reader
//! - [`preprocess`]: context rendering, placeholder filling, tokenization
//! - [`scores`]: signal sources and the [`scores::ScoreMatrix`] they build
//! - [`models`]: naive Bayes, logistic and linear heads, threshold calibration
//! - [`eval`]: accuracy, per-class F1, Spearman rank, reports
//! - [`experiment`]: config-driven train / predict / evaluate / grid runs
//! - [`toy`]: deterministic synthetic dataset and score files

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod corpus;
pub mod eval;
pub mod experiment;
pub mod models;
pub mod preprocess;
pub mod scores;
pub mod toy;

pub use corpus::{label_to_score, load_dataset, ClozeInstance, Dataset, FillerCandidate, Label};
pub use eval::{build_report, EvaluationReport};
pub use preprocess::ContextMethod;
