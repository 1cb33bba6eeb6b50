//! Labeled image manifests: ingestion, stratified splitting with a
//! synthetic-mixing constraint, and duplicate cross-checking.

mod dedup;
mod dhash;
mod ingest;
mod manifest;
mod split;

use std::path::Path;

use thiserror::Error;

pub use dedup::{dedup_check, DuplicityReport, ExactDuplicate, NearDuplicate, DEFAULT_HAMMING_THRESHOLD};
pub use dhash::{dhash, dhash_hex, hamming};
pub use ingest::{ingest, ingest_directory, ingest_listing, IngestOutcome, ListingEntry};
pub use manifest::{DatasetManifest, Label, SampleRecord, Source, Split};
pub use split::{split, SplitMix, SplitRatios};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Write(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid manifest: {0}")]
    Invalid(String),
    #[error("dataset is empty")]
    Empty,
    #[error("unknown label directory {0:?}; expected one of mpox, other_skin, normal")]
    UnknownLabel(String),
    #[error("unknown source directory {0:?}; expected real or synthetic")]
    UnknownSource(String),
    #[error("invalid split ratios: {0}")]
    Ratios(String),
    #[error("infeasible mix: {0}")]
    InfeasibleMix(String),
}

impl DatasetError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        DatasetError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
