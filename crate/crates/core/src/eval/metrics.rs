use serde::{Deserialize, Serialize};

use super::parse::Decision;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("{predictions} predictions for {labels} labels")]
    LengthMismatch { predictions: usize, labels: usize },
}

/// Confusion counts over parsed predictions; unparseable outputs are tallied separately.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
    pub invalid: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn + self.invalid
    }

    fn record(&mut self, predicted: u8, truth: u8) {
        match (predicted, truth) {
            (1, 1) => self.tp += 1,
            (1, _) => self.fp += 1,
            (_, 1) => self.fn_ += 1,
            _ => self.tn += 1,
        }
    }
}

/// Precision, recall and F1 in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// How unparseable outputs enter the scaled F1.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvalidPolicy {
    /// An unparseable output counts as the wrong label.
    #[default]
    WrongLabel,
    /// An unparseable output on a positive pair counts as a missed positive;
    /// on a negative pair it is dropped.
    MissedPositive,
}

fn check_lengths(preds: &[Decision], truth: &[u8]) -> Result<(), MetricsError> {
    if preds.len() != truth.len() {
        return Err(MetricsError::LengthMismatch {
            predictions: preds.len(),
            labels: truth.len(),
        });
    }
    Ok(())
}

pub fn confusion(preds: &[Decision], truth: &[u8]) -> Result<ConfusionCounts, MetricsError> {
    check_lengths(preds, truth)?;
    let mut counts = ConfusionCounts::default();
    for (p, &t) in preds.iter().zip(truth) {
        match p.label() {
            Some(label) => counts.record(label, t),
            None => counts.invalid += 1,
        }
    }
    Ok(counts)
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Harmonic mean of two percentages; 0 when both are 0.
pub fn f1_from(precision: f64, recall: f64) -> f64 {
    ratio(2.0 * precision * recall, precision + recall)
}

/// Precision, recall and F1 over parsed predictions. Any 0/0 yields 0.
pub fn metrics(c: &ConfusionCounts) -> Scores {
    let precision = 100.0 * ratio(c.tp as f64, (c.tp + c.fp) as f64);
    let recall = 100.0 * ratio(c.tp as f64, (c.tp + c.fn_) as f64);
    Scores {
        precision,
        recall,
        f1: f1_from(precision, recall),
    }
}

/// Share of the test set that produced a usable verdict, in percent.
pub fn response_rate(c: &ConfusionCounts, n_test: usize) -> f64 {
    if n_test == 0 {
        return 0.0;
    }
    100.0 * (n_test - c.invalid) as f64 / n_test as f64
}

/// F1 after counting every unparseable output as a misclassification.
pub fn scaled_f1(preds: &[Decision], truth: &[u8], policy: InvalidPolicy) -> Result<f64, MetricsError> {
    check_lengths(preds, truth)?;
    let mut counts = ConfusionCounts::default();
    for (p, &t) in preds.iter().zip(truth) {
        match (p.label(), policy) {
            (Some(label), _) => counts.record(label, t),
            (None, InvalidPolicy::WrongLabel) => counts.record(1 - t.min(1), t),
            (None, InvalidPolicy::MissedPositive) if t == 1 => counts.fn_ += 1,
            (None, InvalidPolicy::MissedPositive) => {}
        }
    }
    Ok(metrics(&counts).f1)
}
