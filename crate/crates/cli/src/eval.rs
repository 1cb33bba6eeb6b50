use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use msl_core::datasets::{DatasetManifest, SampleRecord, Split};
use msl_core::engine::{execute, ExecOptions};
use msl_core::imaging;
use msl_core::metrics::{ConfusionMatrix, DiagnosticsReport, MetricsError};
use msl_core::model_io::ModelContainer;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("manifest has no records in the {0} split")]
    EmptySplit(&'static str),
    #[error("model has no class named {0:?}")]
    UnknownClass(String),
    #[error("{failed} records could not be evaluated (limit {max_skip}); first: {first}")]
    TooManySkipped { failed: usize, max_skip: usize, first: String },
    #[error("every record in the split failed")]
    NothingEvaluated,
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub split: Split,
    pub target_class: String,
    pub confidence: f64,
    /// Unreadable records tolerated before the run fails.
    pub max_skip: usize,
    /// Directory that record paths are relative to.
    pub root: PathBuf,
}

#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub report: DiagnosticsReport,
    pub evaluated: usize,
    pub skipped: Vec<String>,
}

fn predict(model: &ModelContainer, path: &Path) -> Result<usize, String> {
    let bytes = std::fs::read(path).map_err(|e| e.to_string())?;
    let img = imaging::decode(&bytes).map_err(|e| e.to_string())?;
    let input = imaging::preprocess(&img, model.metadata()).map_err(|e| e.to_string())?;
    let (p, _) = execute(model, &input, &ExecOptions::default()).map_err(|e| e.to_string())?;
    Ok(p.iter().enumerate().fold(0, |best, (i, &v)| if v > p[best] { i } else { best }))
}

/// Runs every record of one split through the model, in record-id order, and
/// builds the diagnostics report from the resulting confusion matrix.
pub fn evaluate(
    model: &ModelContainer,
    manifest: &DatasetManifest,
    opts: &EvalOptions,
    progress: Option<&(dyn Fn(usize, usize) + Sync)>,
) -> Result<EvalOutcome, EvalError> {
    let names = model.class_names().to_vec();
    let target = names
        .iter()
        .position(|c| *c == opts.target_class)
        .ok_or_else(|| EvalError::UnknownClass(opts.target_class.clone()))?;
    let mut records: Vec<&SampleRecord> = manifest.in_split(opts.split).collect();
    if records.is_empty() {
        return Err(EvalError::EmptySplit(opts.split.as_str()));
    }
    records.sort_by(|a, b| a.id.cmp(&b.id));
    let truth: Vec<usize> = records
        .iter()
        .map(|r| {
            names
                .iter()
                .position(|c| c == r.label.as_str())
                .ok_or_else(|| EvalError::UnknownClass(r.label.as_str().to_string()))
        })
        .collect::<Result<_, _>>()?;

    let done = AtomicUsize::new(0);
    let total = records.len();
    let predictions: Vec<Result<usize, String>> = records
        .par_iter()
        .map(|r| {
            let p = predict(model, &opts.root.join(&r.path)).map_err(|e| format!("{}: {e}", r.path));
            let n = done.fetch_add(1, Ordering::Relaxed) + 1;
            if let Some(cb) = progress {
                cb(n, total);
            }
            p
        })
        .collect();

    let mut cm = ConfusionMatrix::zeros(names);
    let mut skipped = Vec::new();
    for (t, p) in truth.iter().zip(predictions) {
        match p {
            Ok(p) => cm.record(*t, p),
            Err(e) => skipped.push(e),
        }
    }
    if skipped.len() > opts.max_skip {
        return Err(EvalError::TooManySkipped {
            failed: skipped.len(),
            max_skip: opts.max_skip,
            first: skipped[0].clone(),
        });
    }
    if cm.total() == 0 {
        return Err(EvalError::NothingEvaluated);
    }
    let report = DiagnosticsReport::new(&cm, target, opts.confidence)?;
    Ok(EvalOutcome {
        evaluated: cm.total() as usize,
        report,
        skipped,
    })
}
