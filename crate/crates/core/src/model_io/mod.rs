//! The MSLW model container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! offset 0   b"MSLW"
//! offset 4   u32 format version (only 1 is accepted)
//! offset 8   u32 header length in bytes
//! offset 12  UTF-8 JSON header {metadata, nodes, blob_bytes}
//!            zero padding up to the next 16-byte file offset
//! ...        blob section: f32 LE arrays, each starting on a 16-byte
//!            boundary, packed in node order (weight, then bias), zero
//!            padding between blobs, no trailing bytes
//! ```
//!
//! Blob offsets in the header are relative to the start of the blob section.

mod builder;
mod envelope;
mod format;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use builder::{nano_classifier, GraphBuilder};
pub use envelope::{validate_envelope, EnvelopeReport, MAX_FILE_BYTES, PARAM_RANGE};
pub use format::{load_model, read_model, write_model, write_model_file, FORMAT_VERSION, MAGIC};

use crate::engine::{Graph, GraphError, Node};
use crate::training::TrainingConfig;

#[derive(Debug, Error)]
pub enum ModelIoError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic at byte 0: expected \"MSLW\", found {found:?}")]
    BadMagic { found: Vec<u8> },
    #[error("unsupported format version {version} at byte 4 (only {FORMAT_VERSION} is supported)")]
    UnsupportedVersion { version: u32 },
    #[error("file truncated at byte {offset}: needed {needed} bytes, {available} available")]
    Truncated {
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("invalid JSON header at byte {offset}: {source}")]
    HeaderJson {
        offset: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("node {node}: unknown op kind {kind:?}")]
    UnknownOpKind { node: usize, kind: String },
    #[error("node {node}: {detail}")]
    NodeAttrs { node: usize, detail: String },
    #[error("node {node}: blob at offset {offset} with {bytes} bytes lies outside the {section} byte blob section")]
    BlobOutOfBounds {
        node: usize,
        offset: u64,
        bytes: u64,
        section: u64,
    },
    #[error("node {node}: blob starts at offset {actual}, expected {expected} (blobs are packed in node order on 16-byte boundaries)")]
    BlobLayout { node: usize, expected: u64, actual: u64 },
    #[error("blob section truncated at byte {offset}: header declares {declared} bytes, {available} present")]
    TruncatedBlobs {
        offset: usize,
        declared: u64,
        available: u64,
    },
    #[error("{extra} unexpected trailing bytes after the blob section at byte {offset}")]
    TrailingBytes { offset: usize, extra: usize },
    #[error("header declares {declared} blob bytes but the blobs end at {actual}")]
    BlobBytesMismatch { declared: u64, actual: u64 },
    #[error("param_count mismatch: metadata declares {declared}, blobs hold {actual}")]
    ParamCountMismatch { declared: u64, actual: u64 },
    #[error("model has no parameters")]
    NoParameters,
    #[error("invalid metadata: {0}")]
    Metadata(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Layout {
    #[serde(rename = "NCHW")]
    Nchw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColorOrder {
    #[serde(rename = "RGB")]
    Rgb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputGeometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub layout: Layout,
    pub color_order: ColorOrder,
}

impl InputGeometry {
    pub fn rgb(height: usize, width: usize) -> Self {
        Self {
            channels: 3,
            height,
            width,
            layout: Layout::Nchw,
            color_order: ColorOrder::Rgb,
        }
    }

    pub fn tensor_shape(&self) -> Vec<usize> {
        vec![1, self.channels, self.height, self.width]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResizePolicy {
    /// Resize the shortest side to the target, then center-crop.
    ShortestSideCenterCrop,
    /// Resize both axes independently to the target.
    Stretch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessPolicy {
    pub resize_policy: ResizePolicy,
    pub scale: f64,
    pub per_channel_mean: [f64; 3],
    pub per_channel_std: [f64; 3],
}

impl Default for PreprocessPolicy {
    fn default() -> Self {
        Self {
            resize_policy: ResizePolicy::ShortestSideCenterCrop,
            scale: 1.0 / 255.0,
            per_channel_mean: [0.0; 3],
            per_channel_std: [1.0; 3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub model_name: String,
    pub class_names: Vec<String>,
    pub input: InputGeometry,
    pub preprocess: PreprocessPolicy,
    pub param_count: u64,
    pub source_fingerprint: String,
    /// Training hyperparameters, informational only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training: Option<TrainingConfig>,
}

impl ModelMetadata {
    /// The three-class screening label set.
    pub fn default_class_names() -> Vec<String> {
        ["mpox", "other_skin", "normal"].map(String::from).to_vec()
    }

    fn validate(&self) -> Result<(), ModelIoError> {
        if self.class_names.is_empty() {
            return Err(ModelIoError::Metadata("class_names is empty".into()));
        }
        for (i, name) in self.class_names.iter().enumerate() {
            if self.class_names[..i].contains(name) {
                return Err(ModelIoError::Metadata(format!("duplicate class name {name:?}")));
            }
        }
        let g = &self.input;
        if g.channels != 3 || g.height == 0 || g.width == 0 {
            return Err(ModelIoError::Metadata(format!(
                "input geometry must be 3 x H x W with H, W >= 1, got {} x {} x {}",
                g.channels, g.height, g.width
            )));
        }
        let p = &self.preprocess;
        if !(p.scale.is_finite() && p.scale > 0.0)
            || p.per_channel_std.iter().any(|s| !(s.is_finite() && *s > 0.0))
            || p.per_channel_mean.iter().any(|m| !m.is_finite())
        {
            return Err(ModelIoError::Metadata(
                "preprocess scale and std must be positive and finite, mean finite".into(),
            ));
        }
        Ok(())
    }
}

/// A fully validated, immutable model.
#[derive(Debug, Clone)]
pub struct ModelContainer {
    metadata: ModelMetadata,
    graph: Graph,
    fingerprint: String,
    file_size: u64,
}

impl ModelContainer {
    /// Validates `nodes` against `metadata`. Fingerprint and size are those of
    /// the canonical serialization.
    pub fn new(metadata: ModelMetadata, nodes: Vec<Node>) -> Result<Self, ModelIoError> {
        let bytes = format::serialize(&metadata, &nodes)?;
        read_model(&bytes)
    }

    pub(crate) fn from_validated_parts(
        metadata: ModelMetadata,
        nodes: Vec<Node>,
        file_bytes: &[u8],
    ) -> Result<Self, ModelIoError> {
        metadata.validate()?;
        let graph = Graph::new(nodes, &metadata.input.tensor_shape())?;
        let actual = graph.param_count() as u64;
        if actual == 0 {
            return Err(ModelIoError::NoParameters);
        }
        if actual != metadata.param_count {
            return Err(ModelIoError::ParamCountMismatch {
                declared: metadata.param_count,
                actual,
            });
        }
        let out = graph.output_shape();
        if out.len() != 2 || out[1] != metadata.class_names.len() {
            return Err(ModelIoError::Metadata(format!(
                "graph output {out:?} does not match {} class names",
                metadata.class_names.len()
            )));
        }
        Ok(Self {
            metadata,
            graph,
            fingerprint: hex(&Sha256::digest(file_bytes)),
            file_size: file_bytes.len() as u64,
        })
    }

    pub fn metadata(&self) -> &ModelMetadata {
        &self.metadata
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn class_names(&self) -> &[String] {
        &self.metadata.class_names
    }

    pub fn param_count(&self) -> u64 {
        self.metadata.param_count
    }

    /// SHA-256 of the serialized container, lowercase hex.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn file_size(&self) -> u64 {
        self.file_size
    }
}

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    use std::fmt::Write;
    bytes.iter().fold(String::with_capacity(bytes.len() * 2), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}
