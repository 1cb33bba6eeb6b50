//! Diagnostic evaluation: confusion matrices, one-vs-rest metrics, Wilson
//! score intervals, top-k accuracy and report rendering.

mod confusion;
mod interval;
mod report;

use thiserror::Error;

pub use confusion::{confusion, confusion_by_name, BinaryCounts, ConfusionMatrix, Ratio};
pub use interval::{wilson_center, wilson_interval, z_for, Z_95};
pub use report::{
    binary_diagnostics, class_metrics, emit_report, fmt_half_up, BinaryDiagnostics, ClassMetrics, ClassReport,
    DiagnosticsReport, Estimate, ReportFormat, TargetDiagnostics,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("label sequences differ in length: {truth} true vs {predicted} predicted")]
    LengthMismatch { truth: usize, predicted: usize },
    #[error("label {label} at position {position} is outside the class set")]
    LabelOutOfRange { position: usize, label: usize },
    #[error("unknown label {label:?} at position {position}")]
    UnknownLabel { position: usize, label: String },
    #[error("class index {0} is outside the class set")]
    ClassIndex(usize),
    #[error("no classes declared")]
    NoClasses,
    #[error("{0}")]
    Shape(String),
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("interval needs at least one trial")]
    ZeroTrials,
    #[error("{successes} successes out of {n} trials")]
    InvalidSuccesses { successes: u64, n: u64 },
    #[error("confidence must lie in (0, 1), got {0}")]
    InvalidConfidence(f64),
    #[error("k must be at least 1")]
    ZeroK,
}

/// Fraction of rows whose true label is among the `k` highest
/// probabilities. Ties resolve in favour of the true label.
pub fn topk_accuracy(truth: &[usize], probability_rows: &[Vec<f32>], k: usize) -> Result<f64, MetricsError> {
    if k == 0 {
        return Err(MetricsError::ZeroK);
    }
    if truth.len() != probability_rows.len() {
        return Err(MetricsError::LengthMismatch {
            truth: truth.len(),
            predicted: probability_rows.len(),
        });
    }
    if truth.is_empty() {
        return Err(MetricsError::EmptyMatrix);
    }
    let mut hits = 0usize;
    for (position, (&t, row)) in truth.iter().zip(probability_rows).enumerate() {
        let p_true = *row
            .get(t)
            .ok_or(MetricsError::LabelOutOfRange { position, label: t })?;
        let above = row.iter().filter(|&&p| p > p_true).count();
        if above < k {
            hits += 1;
        }
    }
    Ok(hits as f64 / truth.len() as f64)
}
