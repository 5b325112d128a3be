//! Ranking and thresholded classification metrics, plus a k-fold harness.
//!
//! `auroc` is the Mann–Whitney statistic: the probability that a random
//! positive outscores a random negative, with ties worth one half. It is
//! computed from tie groups in sorted order, accumulating twice the U
//! statistic as an integer so the only rounding happens in the final
//! division.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::Fold;
use crate::error::{Error, Result};

fn check_inputs(scores: &[f64], labels: &[u8]) -> Result<(u64, u64)> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            found: labels.len(),
        });
    }
    if let Some(bad) = scores.iter().find(|s| s.is_nan()) {
        return Err(Error::Validation(format!("score {bad} is not a number")));
    }
    let mut n_pos = 0;
    for &y in labels {
        match y {
            0 => {}
            1 => n_pos += 1,
            other => return Err(Error::Validation(format!("label {other} is not binary"))),
        }
    }
    let n_neg = labels.len() as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    Ok((n_pos, n_neg))
}

pub fn auroc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (n_pos, n_neg) = check_inputs(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // twice the number of (positive, negative) pairs won by the positive
    let mut twice_u: u128 = 0;
    let mut negatives_below: u128 = 0;
    let mut start = 0;
    while start < order.len() {
        let score = scores[order[start]];
        let mut end = start;
        let (mut pos, mut neg) = (0u128, 0u128);
        // -0.0 and 0.0 tie, so compare with == rather than total_cmp
        while end < order.len() && scores[order[end]] == score {
            if labels[order[end]] == 1 {
                pos += 1;
            } else {
                neg += 1;
            }
            end += 1;
        }
        twice_u += 2 * pos * negatives_below + pos * neg;
        negatives_below += neg;
        start = end;
    }
    Ok(twice_u as f64 / (2 * u128::from(n_pos) * u128::from(n_neg)) as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub true_pos: u64,
    pub false_pos: u64,
    pub true_neg: u64,
    pub false_neg: u64,
}

impl Confusion {
    /// Predicted positive iff `score >= threshold`.
    pub fn tally(scores: &[f64], labels: &[u8], threshold: f64) -> Self {
        let mut c = Confusion::default();
        for (&s, &y) in scores.iter().zip(labels) {
            match (s >= threshold, y == 1) {
                (true, true) => c.true_pos += 1,
                (true, false) => c.false_pos += 1,
                (false, false) => c.true_neg += 1,
                (false, true) => c.false_neg += 1,
            }
        }
        c
    }

    pub fn total(&self) -> u64 {
        self.true_pos + self.false_pos + self.true_neg + self.false_neg
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.true_pos + self.true_neg, self.total())
    }

    /// Zero when nothing is predicted positive.
    pub fn precision(&self) -> f64 {
        ratio(self.true_pos, self.true_pos + self.false_pos)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.true_pos, self.true_pos + self.false_neg)
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
}

pub fn classification_metrics(scores: &[f64], labels: &[u8], threshold: f64) -> Result<ClassificationMetrics> {
    check_threshold(threshold)?;
    check_inputs(scores, labels)?;
    let c = Confusion::tally(scores, labels, threshold);
    Ok(ClassificationMetrics {
        accuracy: c.accuracy(),
        precision: c.precision(),
        recall: c.recall(),
    })
}

fn check_threshold(threshold: f64) -> Result<()> {
    if threshold > 0.0 && threshold < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!(
            "threshold must lie in (0, 1), got {threshold}"
        )))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub auroc: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub threshold: f64,
    pub n_pos: u64,
    pub n_neg: u64,
    pub confusion: Confusion,
}

impl EvalReport {
    pub fn compute(scores: &[f64], labels: &[u8], threshold: f64) -> Result<Self> {
        check_threshold(threshold)?;
        let (n_pos, n_neg) = check_inputs(scores, labels)?;
        let confusion = Confusion::tally(scores, labels, threshold);
        Ok(EvalReport {
            auroc: auroc(scores, labels)?,
            accuracy: confusion.accuracy(),
            precision: confusion.precision(),
            recall: confusion.recall(),
            threshold,
            n_pos,
            n_neg,
            confusion,
        })
    }

    /// `key value` lines, one per field.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (key, value) in self.fields() {
            writeln!(out, "{key} {value}").unwrap();
        }
        out
    }

    fn fields(&self) -> Vec<(&'static str, String)> {
        let c = &self.confusion;
        vec![
            ("auroc", self.auroc.to_string()),
            ("accuracy", self.accuracy.to_string()),
            ("precision", self.precision.to_string()),
            ("recall", self.recall.to_string()),
            ("threshold", self.threshold.to_string()),
            ("n_pos", self.n_pos.to_string()),
            ("n_neg", self.n_neg.to_string()),
            ("true_pos", c.true_pos.to_string()),
            ("false_pos", c.false_pos.to_string()),
            ("true_neg", c.true_neg.to_string()),
            ("false_neg", c.false_neg.to_string()),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub auroc: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValidationReport {
    pub folds: Vec<EvalReport>,
    pub mean: MetricSummary,
    /// Sample standard deviation (n - 1 denominator).
    pub std_dev: MetricSummary,
}

impl CrossValidationReport {
    pub fn from_folds(folds: Vec<EvalReport>) -> Result<Self> {
        if folds.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "need at least 2 folds, got {}",
                folds.len()
            )));
        }
        let column = |f: fn(&EvalReport) -> f64| -> (f64, f64) {
            let n = folds.len() as f64;
            let mean = folds.iter().map(f).sum::<f64>() / n;
            let var = folds.iter().map(|r| (f(r) - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (mean, var.sqrt())
        };
        let (auroc, accuracy, precision, recall) = (
            column(|r| r.auroc),
            column(|r| r.accuracy),
            column(|r| r.precision),
            column(|r| r.recall),
        );
        Ok(CrossValidationReport {
            mean: MetricSummary {
                auroc: auroc.0,
                accuracy: accuracy.0,
                precision: precision.0,
                recall: recall.0,
            },
            std_dev: MetricSummary {
                auroc: auroc.1,
                accuracy: accuracy.1,
                precision: precision.1,
                recall: recall.1,
            },
            folds,
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "folds {}", self.folds.len()).unwrap();
        for (i, fold) in self.folds.iter().enumerate() {
            for (key, value) in fold.fields() {
                writeln!(out, "fold{}.{key} {value}", i + 1).unwrap();
            }
        }
        for (prefix, m) in [("mean", &self.mean), ("std_dev", &self.std_dev)] {
            writeln!(out, "{prefix}.auroc {}", m.auroc).unwrap();
            writeln!(out, "{prefix}.accuracy {}", m.accuracy).unwrap();
            writeln!(out, "{prefix}.precision {}", m.precision).unwrap();
            writeln!(out, "{prefix}.recall {}", m.recall).unwrap();
        }
        out
    }
}

/// Runs `train_and_score` on every fold and evaluates its holdout scores.
///
/// The closure trains on `fold.train` and returns `(scores, labels)` for
/// `fold.holdout`. Any error is reported with the 1-based fold number.
pub fn cross_validate<F>(folds: &[Fold], threshold: f64, mut train_and_score: F) -> Result<CrossValidationReport>
where
    F: FnMut(&Fold) -> Result<(Vec<f64>, Vec<u8>)>,
{
    if folds.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 folds, got {}",
            folds.len()
        )));
    }
    let mut reports = Vec::with_capacity(folds.len());
    for (i, fold) in folds.iter().enumerate() {
        let wrap = |e| Error::Fold {
            fold: i + 1,
            source: Box::new(e),
        };
        let (scores, labels) = train_and_score(fold).map_err(wrap)?;
        reports.push(EvalReport::compute(&scores, &labels, threshold).map_err(wrap)?);
    }
    CrossValidationReport::from_folds(reports)
}
