//! Accuracy, per-class F1 and Spearman rank correlation, plus report
//! rendering.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{label_to_score, Label};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("no samples")]
    Empty,
    #[error("rank correlation needs at least two samples")]
    TooFewSamples,
    #[error("rank correlation is undefined for a constant vector")]
    ConstantVector,
}

fn check_aligned<A, B>(a: &[A], b: &[B]) -> Result<(), EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(())
}

pub fn accuracy(pred: &[Label], gold: &[Label]) -> Result<f64, EvalError> {
    check_aligned(pred, gold)?;
    if pred.is_empty() {
        return Err(EvalError::Empty);
    }
    let hits = pred.iter().zip(gold).filter(|(p, g)| p == g).count();
    Ok(hits as f64 / pred.len() as f64)
}

/// `confusion[gold][predicted]`.
pub fn confusion_matrix(pred: &[Label], gold: &[Label]) -> Result<[[usize; 3]; 3], EvalError> {
    check_aligned(pred, gold)?;
    let mut m = [[0usize; 3]; 3];
    for (p, g) in pred.iter().zip(gold) {
        m[g.index()][p.index()] += 1;
    }
    Ok(m)
}

/// One-vs-rest F1; 0 when the class has no true positives.
pub fn per_class_f1(pred: &[Label], gold: &[Label], class: Label) -> Result<f64, EvalError> {
    check_aligned(pred, gold)?;
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for (&p, &g) in pred.iter().zip(gold) {
        match (p == class, g == class) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            (false, false) => {}
        }
    }
    if tp == 0 {
        return Ok(0.0);
    }
    // 2PR / (P + R) with a single rounding
    Ok((2 * tp) as f64 / (2 * tp + fp + fneg) as f64)
}

/// 1-based ranks; tied values share the mean of the positions they span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64, EvalError> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(EvalError::ConstantVector);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's rho: Pearson correlation of average ranks.
pub fn spearman_rank(x: &[f64], y: &[f64]) -> Result<f64, EvalError> {
    check_aligned(x, y)?;
    if x.len() < 2 {
        return Err(EvalError::TooFewSamples);
    }
    let distinct = |v: &[f64]| v.iter().any(|a| *a != v[0]);
    if !distinct(x) || !distinct(y) {
        return Err(EvalError::ConstantVector);
    }
    pearson(&average_ranks(x), &average_ranks(y))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub n: usize,
    pub accuracy: f64,
    /// Implausible, Neutral, Plausible.
    pub f1_per_class: [f64; 3],
    /// Absent when either side is constant.
    pub spearman: Option<f64>,
    /// `confusion[gold][predicted]`
    pub confusion: [[usize; 3]; 3],
}

/// Scores predictions against gold labels. Spearman is taken against the
/// gold scores when supplied, else against the gold labels' ordinal scores.
pub fn build_report(
    pred: &[Label],
    gold_labels: &[Label],
    gold_scores: Option<&[f64]>,
) -> Result<EvaluationReport, EvalError> {
    let acc = accuracy(pred, gold_labels)?;
    let confusion = confusion_matrix(pred, gold_labels)?;
    let f1_per_class = Label::ALL
        .map(|class| per_class_f1(pred, gold_labels, class))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?
        .try_into()
        .expect("three classes");
    let predicted: Vec<f64> = pred.iter().map(|l| label_to_score(*l)).collect();
    let reference: Vec<f64> = match gold_scores {
        Some(scores) => scores.to_vec(),
        None => gold_labels.iter().map(|l| label_to_score(*l)).collect(),
    };
    let spearman = match spearman_rank(&predicted, &reference) {
        Ok(rho) => Some(rho),
        Err(EvalError::ConstantVector | EvalError::TooFewSamples) => None,
        Err(e) => return Err(e),
    };
    Ok(EvaluationReport {
        n: pred.len(),
        accuracy: acc,
        f1_per_class,
        spearman,
        confusion,
    })
}

impl EvaluationReport {
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }

    /// Single-row table.
    pub fn render(&self, method: &str) -> String {
        render_table(&[(method.to_string(), self.clone())])
    }
}

/// Plain-text comparison table, one row per method, figures to two decimals.
pub fn render_table(rows: &[(String, EvaluationReport)]) -> String {
    let header = [
        "Method",
        "accuracy",
        "fscore0",
        "fscore1",
        "fscore2",
        "spearman rank",
    ];
    let cells: Vec<[String; 6]> = rows
        .iter()
        .map(|(name, r)| {
            [
                name.clone(),
                format!("{:.2}", r.accuracy),
                format!("{:.2}", r.f1_per_class[0]),
                format!("{:.2}", r.f1_per_class[1]),
                format!("{:.2}", r.f1_per_class[2]),
                r.spearman
                    .map_or_else(|| "-".to_string(), |s| format!("{s:.2}")),
            ]
        })
        .collect();
    let widths: Vec<usize> = (0..header.len())
        .map(|c| {
            cells
                .iter()
                .map(|row| row[c].len())
                .chain(std::iter::once(header[c].len()))
                .max()
                .unwrap_or(0)
        })
        .collect();
    let line = |fields: Vec<&str>| {
        let padded: Vec<String> = fields
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (f, w))| {
                if i == 0 {
                    format!("{f:<w$}")
                } else {
                    format!("{f:>w$}")
                }
            })
            .collect();
        format!("| {} |\n", padded.join(" | "))
    };
    let rule = format!(
        "+{}+\n",
        widths
            .iter()
            .map(|w| "-".repeat(w + 2))
            .collect::<Vec<_>>()
            .join("+")
    );
    let mut out = rule.clone();
    out.push_str(&line(header.to_vec()));
    out.push_str(&rule);
    for row in &cells {
        out.push_str(&line(row.iter().map(String::as_str).collect()));
    }
    out.push_str(&rule);
    out
}
