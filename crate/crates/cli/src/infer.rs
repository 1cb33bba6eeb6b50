use std::fmt::Write;
use std::path::Path;
use std::time::Instant;

use msl_core::engine::{execute, ExecOptions};
use msl_core::imaging;
use msl_core::model_io::{load_model, ModelContainer};
use msl_core::screening::{screening_result, ScreeningResult, TriageThresholds, TARGET_CLASS};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum InferError {
    #[error("cannot load model: {0}")]
    Model(String),
    #[error("cannot use image: {0}")]
    Image(String),
    #[error("inference failed: {0}")]
    Engine(String),
}

impl InferError {
    /// Process exit status for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            InferError::Model(_) => 2,
            InferError::Image(_) => 3,
            InferError::Engine(_) => 1,
        }
    }
}

pub fn load_screening_model(path: &Path) -> Result<ModelContainer, InferError> {
    let model = load_model(path).map_err(|e| InferError::Model(e.to_string()))?;
    if !model.class_names().iter().any(|c| c == TARGET_CLASS) {
        return Err(InferError::Model(format!("model has no {TARGET_CLASS:?} class")));
    }
    Ok(model)
}

/// Screens one image file; `inference_ms` covers decode through softmax.
pub fn infer_file(model: &ModelContainer, image: &Path, thresholds: &TriageThresholds) -> Result<ScreeningResult, InferError> {
    let bytes = std::fs::read(image).map_err(|e| InferError::Image(format!("{}: {e}", image.display())))?;
    let start = Instant::now();
    let img = imaging::decode(&bytes).map_err(|e| InferError::Image(format!("{}: {e}", image.display())))?;
    let input = imaging::preprocess(&img, model.metadata()).map_err(|e| InferError::Image(format!("{}: {e}", image.display())))?;
    let (probs, _) = execute(model, &input, &ExecOptions::default()).map_err(|e| InferError::Engine(e.to_string()))?;
    let ms = start.elapsed().as_secs_f64() * 1e3;
    screening_result(model, &probs, thresholds, ms).map_err(|e| InferError::Model(e.to_string()))
}

pub fn format_text(result: &ScreeningResult, class_order: &[String]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "model       {} ({})", result.model_name, &result.model_fingerprint[..12.min(result.model_fingerprint.len())]);
    for class in class_order {
        let p = result.probabilities.get(class).copied().unwrap_or(0.0);
        let _ = writeln!(out, "p({class:<10}) {p:.4}");
    }
    let _ = writeln!(out, "predicted   {}", result.predicted);
    let _ = writeln!(out, "triage      {}", result.triage.as_str());
    let _ = writeln!(out, "time        {:.1} ms", result.inference_ms);
    out.push_str("Screening aid only. Confirm suspected cases with PCR testing.\n");
    out
}
