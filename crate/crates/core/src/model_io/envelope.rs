use serde::Serialize;

use super::ModelContainer;

/// Accepted parameter-count range for the nano screening model class.
pub const PARAM_RANGE: (u64, u64) = (1_000_000, 2_000_000);

/// Largest conforming container, in bytes. 1.44M f32 parameters take about
/// 5.8 MB before any header.
pub const MAX_FILE_BYTES: u64 = 8_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EnvelopeReport {
    pub param_count: u64,
    pub file_bytes: u64,
    pub params_in_range: bool,
    pub size_in_range: bool,
    pub messages: Vec<String>,
}

impl EnvelopeReport {
    pub fn evaluate(param_count: u64, file_bytes: u64) -> Self {
        let params_in_range = (PARAM_RANGE.0..=PARAM_RANGE.1).contains(&param_count);
        let size_in_range = file_bytes <= MAX_FILE_BYTES;
        let mut messages = Vec::new();
        if !params_in_range {
            messages.push(format!(
                "param_count {param_count} outside the envelope [{}, {}]",
                PARAM_RANGE.0, PARAM_RANGE.1
            ));
        }
        if !size_in_range {
            messages.push(format!("file size {file_bytes} bytes exceeds the {MAX_FILE_BYTES} byte envelope"));
        }
        Self {
            param_count,
            file_bytes,
            params_in_range,
            size_in_range,
            messages,
        }
    }

    pub fn conforming(&self) -> bool {
        self.params_in_range && self.size_in_range
    }
}

/// Checks a loaded model against the parameter and file-size envelope.
/// Out-of-envelope models stay usable; the report only marks them.
pub fn validate_envelope(model: &ModelContainer) -> EnvelopeReport {
    EnvelopeReport::evaluate(model.param_count(), model.file_size())
}
