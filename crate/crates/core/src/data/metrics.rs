use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{DataError, Label};

/// Accuracy, per-class F1 (order N, F, T, U) and the confusion matrix
/// (`confusion[true][predicted]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub f1: [f64; 4],
    pub confusion: [[u64; 4]; 4],
    pub n_eval: usize,
}

pub fn compute_metrics(predictions: &[usize], labels: &[usize]) -> Result<MetricsReport, DataError> {
    if predictions.len() != labels.len() {
        return Err(DataError::LengthMismatch {
            predictions: predictions.len(),
            labels: labels.len(),
        });
    }
    if predictions.is_empty() {
        return Err(DataError::EmptySplit("evaluation set".into()));
    }
    let mut confusion = [[0u64; 4]; 4];
    for (&p, &l) in predictions.iter().zip(labels) {
        if p >= Label::COUNT || l >= Label::COUNT {
            return Err(DataError::Schema {
                line: 0,
                message: format!("class index out of range: predicted {p}, true {l}"),
            });
        }
        confusion[l][p] += 1;
    }
    let n = predictions.len();
    let correct: u64 = (0..4).map(|c| confusion[c][c]).sum();
    let mut f1 = [0.0; 4];
    for (c, f) in f1.iter_mut().enumerate() {
        let tp = confusion[c][c] as f64;
        let predicted: u64 = (0..4).map(|t| confusion[t][c]).sum();
        let actual: u64 = confusion[c].iter().sum();
        let precision = if predicted > 0 { tp / predicted as f64 } else { 0.0 };
        let recall = if actual > 0 { tp / actual as f64 } else { 0.0 };
        *f = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
    }
    Ok(MetricsReport {
        accuracy: correct as f64 / n as f64,
        f1,
        confusion,
        n_eval: n,
    })
}

impl MetricsReport {
    /// Aligned plain-text rendering.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:>9} {:>7} {:>7} {:>7} {:>7} {:>6}",
            "accuracy", "N(F1)", "F(F1)", "T(F1)", "U(F1)", "n"
        );
        let _ = writeln!(
            s,
            "{:>9.3} {:>7.3} {:>7.3} {:>7.3} {:>7.3} {:>6}",
            self.accuracy, self.f1[0], self.f1[1], self.f1[2], self.f1[3], self.n_eval
        );
        s
    }
}
