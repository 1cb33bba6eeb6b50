use serde::{Deserialize, Serialize};

use super::confusion::{ConfusionMatrix, Ratio};
use super::interval::{wilson_real, z_for};
use super::MetricsError;

/// A point estimate with its confidence interval; all fields are `None`
/// when the underlying ratio is 0/0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub numerator: f64,
    pub denominator: f64,
}

impl Estimate {
    /// Wilson interval over real-valued counts.
    fn wilson(numerator: f64, denominator: f64, z: f64) -> Self {
        if denominator <= 0.0 {
            return Self {
                value: None,
                ci_low: None,
                ci_high: None,
                numerator,
                denominator,
            };
        }
        let (lo, hi) = wilson_real(numerator, denominator, z);
        Self {
            value: Some(numerator / denominator),
            ci_low: Some(lo),
            ci_high: Some(hi),
            numerator,
            denominator,
        }
    }

    fn from_ratio(r: Ratio, z: f64) -> Self {
        Self::wilson(r.numerator as f64, r.denominator as f64, z)
    }

    pub fn is_defined(&self) -> bool {
        self.value.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassMetrics {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

/// One-vs-rest precision, recall and F1 for `class`. 0/0 cases are `None`.
pub fn class_metrics(cm: &ConfusionMatrix, class: usize) -> ClassMetrics {
    let b = cm.binary(class);
    ClassMetrics {
        precision: Ratio::new(b.tp, b.tp + b.fp).value(),
        recall: Ratio::new(b.tp, b.tp + b.fn_).value(),
        f1: Ratio::new(2 * b.tp, 2 * b.tp + b.fp + b.fn_).value(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinaryDiagnostics {
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
}

/// Collapses the matrix to `target` vs rest.
pub fn binary_diagnostics(cm: &ConfusionMatrix, target: usize) -> BinaryDiagnostics {
    let b = cm.binary(target);
    BinaryDiagnostics {
        sensitivity: Ratio::new(b.tp, b.tp + b.fn_).value(),
        specificity: Ratio::new(b.tn, b.tn + b.fp).value(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class: String,
    pub n_true: u64,
    pub n_predicted: u64,
    pub precision: Estimate,
    pub recall: Estimate,
    pub f1: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetDiagnostics {
    pub class: String,
    pub sensitivity: Estimate,
    pub specificity: Estimate,
}

/// Everything the evaluation tables show, computed once from one matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub interval_method: String,
    pub confidence: f64,
    pub n_total: u64,
    pub n_per_class: Vec<u64>,
    pub confusion: ConfusionMatrix,
    pub accuracy: Estimate,
    pub per_class: Vec<ClassReport>,
    pub target: TargetDiagnostics,
}

impl DiagnosticsReport {
    /// F1 intervals treat F1 = TP / ((n_true + n_predicted) / 2) as a
    /// proportion over the mean of actual and predicted positives.
    pub fn new(cm: &ConfusionMatrix, target: usize, confidence: f64) -> Result<Self, MetricsError> {
        if cm.total() == 0 {
            return Err(MetricsError::EmptyMatrix);
        }
        if target >= cm.num_classes() {
            return Err(MetricsError::ClassIndex(target));
        }
        let z = z_for(confidence)?;
        let per_class = (0..cm.num_classes())
            .map(|c| {
                let b = cm.binary(c);
                let n_true = b.tp + b.fn_;
                let n_predicted = b.tp + b.fp;
                ClassReport {
                    class: cm.class_names()[c].clone(),
                    n_true,
                    n_predicted,
                    precision: Estimate::from_ratio(Ratio::new(b.tp, n_predicted), z),
                    recall: Estimate::from_ratio(Ratio::new(b.tp, n_true), z),
                    f1: Estimate::wilson(b.tp as f64, (n_true + n_predicted) as f64 / 2.0, z),
                }
            })
            .collect();
        let b = cm.binary(target);
        Ok(Self {
            interval_method: "wilson".into(),
            confidence,
            n_total: cm.total(),
            n_per_class: (0..cm.num_classes()).map(|c| cm.row_total(c)).collect(),
            confusion: cm.clone(),
            accuracy: Estimate::from_ratio(cm.accuracy(), z),
            per_class,
            target: TargetDiagnostics {
                class: cm.class_names()[target].clone(),
                sensitivity: Estimate::from_ratio(Ratio::new(b.tp, b.tp + b.fn_), z),
                specificity: Estimate::from_ratio(Ratio::new(b.tn, b.tn + b.fp), z),
            },
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text_table(&self) -> String {
        let conf = format!("{}%", fmt_half_up(self.confidence * 100.0, 0));
        let header = [
            "Category".to_string(),
            format!("Precision ({conf} CI)"),
            format!("Recall ({conf} CI)"),
            format!("F1-score ({conf} CI)"),
        ];
        let mut rows: Vec<[String; 4]> = vec![header];
        for c in &self.per_class {
            rows.push([c.class.clone(), cell(&c.precision), cell(&c.recall), cell(&c.f1)]);
        }
        let widths: Vec<usize> = (0..4)
            .map(|i| rows.iter().map(|r| r[i].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for row in &rows {
            let line: Vec<String> = row
                .iter()
                .zip(&widths)
                .map(|(s, &w)| format!("{s:<w$}"))
                .collect();
            out.push_str(line.join("  ").trim_end());
            out.push('\n');
        }
        out.push('\n');
        out.push_str(&format!("Accuracy: {}  (n = {})\n", cell(&self.accuracy), self.n_total));
        out.push_str(&format!(
            "Target {}: sensitivity {}, specificity {}\n",
            self.target.class,
            cell(&self.target.sensitivity),
            cell(&self.target.specificity)
        ));
        out.push('\n');
        out.push_str(&confusion_table(&self.confusion));
        out
    }
}

/// `point (lo-hi)` as percentages with one decimal, or an em dash when undefined.
fn cell(e: &Estimate) -> String {
    match (e.value, e.ci_low, e.ci_high) {
        (Some(v), Some(lo), Some(hi)) => format!(
            "{} ({}-{})",
            fmt_half_up(v * 100.0, 1),
            fmt_half_up(lo * 100.0, 1),
            fmt_half_up(hi * 100.0, 1)
        ),
        _ => "\u{2014}".into(),
    }
}

/// Decimal rounding with ties away from zero, tolerant of binary
/// representation error (93.05 renders as 93.1).
pub fn fmt_half_up(v: f64, decimals: usize) -> String {
    let scale = 10f64.powi(decimals as i32);
    let scaled = v * scale;
    let rounded = (scaled + scaled.signum() * 1e-9).round() / scale;
    format!("{rounded:.decimals$}")
}

fn confusion_table(cm: &ConfusionMatrix) -> String {
    let names = cm.class_names();
    let width = names
        .iter()
        .map(|n| n.len())
        .chain(cm.counts().iter().flatten().map(|c| c.to_string().len()))
        .chain(["true \\ pred".len()])
        .max()
        .unwrap_or(0);
    let mut out = format!("{:<width$}", "true \\ pred");
    for n in names {
        out.push_str(&format!("  {n:>width$}"));
    }
    out.push('\n');
    for (name, row) in names.iter().zip(cm.counts()) {
        out.push_str(&format!("{name:<width$}"));
        for c in row {
            out.push_str(&format!("  {c:>width$}"));
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    TextTable,
}

/// Builds the report once and renders it in the requested format.
pub fn emit_report(cm: &ConfusionMatrix, target: usize, format: ReportFormat) -> Result<Vec<u8>, MetricsError> {
    let report = DiagnosticsReport::new(cm, target, 0.95)?;
    Ok(match format {
        ReportFormat::Json => report.to_json().into_bytes(),
        ReportFormat::TextTable => report.to_text_table().into_bytes(),
    })
}
