//! Single-image screening, the triage decision rule and the append-only
//! case log.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{execute, EngineError, ExecOptions};
use crate::imaging::{self, ImagingError};
use crate::model_io::ModelContainer;

pub const TARGET_CLASS: &str = "mpox";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Triage {
    ScreenNegativeMonitor,
    IndeterminateReview,
    ScreenPositiveIsolateAndConfirmPcr,
}

impl Triage {
    pub fn as_str(self) -> &'static str {
        match self {
            Triage::ScreenNegativeMonitor => "screen_negative_monitor",
            Triage::IndeterminateReview => "indeterminate_review",
            Triage::ScreenPositiveIsolateAndConfirmPcr => "screen_positive_isolate_and_confirm_pcr",
        }
    }

    /// 0 for negative, 1 for review, 2 for positive.
    pub fn severity(self) -> u8 {
        self as u8
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TriageThresholds {
    /// `p(target) ≥ positive` screens positive.
    pub positive: f64,
    /// `p(target) ≥ review_floor` (below `positive`) asks for review.
    pub review_floor: f64,
}

impl Default for TriageThresholds {
    fn default() -> Self {
        Self {
            positive: 0.50,
            review_floor: 0.20,
        }
    }
}

/// Maps class probabilities to a triage outcome for the class at `target`.
///
/// Positive when `p[target] ≥ positive`; otherwise review when the target is
/// the (first) argmax or `p[target] ≥ review_floor`; otherwise negative.
pub fn triage_rule(probabilities: &[f32], target: usize, thresholds: &TriageThresholds) -> Triage {
    let p = probabilities[target] as f64;
    if p >= thresholds.positive {
        return Triage::ScreenPositiveIsolateAndConfirmPcr;
    }
    let argmax = probabilities
        .iter()
        .enumerate()
        .fold(0, |best, (i, &v)| if v > probabilities[best] { i } else { best });
    if argmax == target || p >= thresholds.review_floor {
        Triage::IndeterminateReview
    } else {
        Triage::ScreenNegativeMonitor
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeningResult {
    /// Server-assigned handle linking a later operator decision to this result.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub screening_id: Option<String>,
    pub probabilities: BTreeMap<String, f64>,
    pub predicted: String,
    pub triage: Triage,
    pub model_name: String,
    pub model_fingerprint: String,
    pub inference_ms: f64,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Error)]
pub enum ScreenError {
    #[error(transparent)]
    Image(#[from] ImagingError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("model has no class named {0:?}")]
    NoTargetClass(String),
}

fn target_index(model: &ModelContainer) -> Result<usize, ScreenError> {
    model
        .class_names()
        .iter()
        .position(|c| c == TARGET_CLASS)
        .ok_or_else(|| ScreenError::NoTargetClass(TARGET_CLASS.into()))
}

/// Builds a result from raw probabilities in model class order.
pub fn screening_result(
    model: &ModelContainer,
    probabilities: &[f32],
    thresholds: &TriageThresholds,
    inference_ms: f64,
) -> Result<ScreeningResult, ScreenError> {
    let target = target_index(model)?;
    let names = model.class_names();
    let argmax = probabilities
        .iter()
        .enumerate()
        .fold(0, |best, (i, &v)| if v > probabilities[best] { i } else { best });
    Ok(ScreeningResult {
        screening_id: None,
        probabilities: names.iter().cloned().zip(probabilities.iter().map(|&p| p as f64)).collect(),
        predicted: names[argmax].clone(),
        triage: triage_rule(probabilities, target, thresholds),
        model_name: model.metadata().model_name.clone(),
        model_fingerprint: model.fingerprint().to_string(),
        inference_ms,
        timestamp: Utc::now(),
    })
}

/// Decode, preprocess, execute and triage one encoded image.
pub fn screen_bytes(model: &ModelContainer, bytes: &[u8], thresholds: &TriageThresholds) -> Result<ScreeningResult, ScreenError> {
    target_index(model)?;
    let start = Instant::now();
    let img = imaging::decode(bytes)?;
    let input = imaging::preprocess(&img, model.metadata())?;
    let (probs, _) = execute(model, &input, &ExecOptions::default())?;
    let ms = start.elapsed().as_secs_f64() * 1e3;
    screening_result(model, &probs, thresholds, ms)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorDecision {
    Isolated,
    ReferredPcr,
    Released,
    Pending,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseLogEntry {
    pub case_id: String,
    pub result: ScreeningResult,
    pub operator_decision: OperatorDecision,
    #[serde(default)]
    pub notes: String,
}

#[derive(Debug, Error)]
pub enum CaseLogError {
    #[error("session log {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("session log {path} line {line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("case_id must be 1-128 characters of [A-Za-z0-9._-]")]
    InvalidCaseId,
    #[error("case {0:?} already has a final decision")]
    Duplicate(String),
}

pub fn valid_case_id(id: &str) -> bool {
    (1..=128).contains(&id.len()) && id.bytes().all(|b| b.is_ascii_alphanumeric() || matches!(b, b'.' | b'_' | b'-'))
}

/// Append-only JSONL session log. A case may gain further lines only while
/// every earlier line for it is `pending`; the last line wins when folding.
#[derive(Debug)]
pub struct SessionLog {
    path: PathBuf,
    file: File,
    entries: Vec<CaseLogEntry>,
}

impl SessionLog {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, CaseLogError> {
        let path = path.as_ref().to_path_buf();
        let io = |source| CaseLogError::Io {
            path: path.display().to_string(),
            source,
        };
        let file = OpenOptions::new().create(true).append(true).read(true).open(&path).map_err(io)?;
        let mut entries = Vec::new();
        for (i, line) in BufReader::new(&file).lines().enumerate() {
            let line = line.map_err(io)?;
            if line.trim().is_empty() {
                continue;
            }
            let entry = serde_json::from_str(&line).map_err(|e| CaseLogError::Parse {
                path: path.display().to_string(),
                line: i + 1,
                message: e.to_string(),
            })?;
            entries.push(entry);
        }
        Ok(Self { path, file, entries })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Every line in file order.
    pub fn entries(&self) -> &[CaseLogEntry] {
        &self.entries
    }

    /// Current state per case, in order of first appearance.
    pub fn cases(&self) -> Vec<CaseLogEntry> {
        let mut order: Vec<&str> = Vec::new();
        let mut latest: BTreeMap<&str, &CaseLogEntry> = BTreeMap::new();
        for e in &self.entries {
            if latest.insert(&e.case_id, e).is_none() {
                order.push(&e.case_id);
            }
        }
        order.into_iter().map(|id| latest[id].clone()).collect()
    }

    pub fn append(&mut self, entry: CaseLogEntry) -> Result<(), CaseLogError> {
        if !valid_case_id(&entry.case_id) {
            return Err(CaseLogError::InvalidCaseId);
        }
        if self
            .entries
            .iter()
            .any(|e| e.case_id == entry.case_id && e.operator_decision != OperatorDecision::Pending)
        {
            return Err(CaseLogError::Duplicate(entry.case_id));
        }
        let mut line = serde_json::to_string(&entry).expect("entry serializes");
        line.push('\n');
        let io = |source| CaseLogError::Io {
            path: self.path.display().to_string(),
            source,
        };
        self.file.write_all(line.as_bytes()).map_err(io)?;
        self.file.flush().map_err(io)?;
        self.entries.push(entry);
        Ok(())
    }
}
