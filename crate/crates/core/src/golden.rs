//! Golden activation bundles: reference per-node outputs for one image,
//! used to check the engine against an independent implementation.
//!
//! Layout: `"MSLG"`, u32 LE version (1), u32 LE header length, compact JSON
//! header, zero padding to a 16-byte file offset, then the blob section.
//! Tensors are f32 LE and every blob starts on a 16-byte boundary relative to
//! the blob section.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{execute_graph, EngineError, ExecOptions};
use crate::imaging::{self, MIN_SIDE};
use crate::model_io::ModelContainer;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"MSLG";
pub const FORMAT_VERSION: u32 = 1;
const PREAMBLE: usize = 12;
const ALIGN: usize = 16;

#[derive(Debug, Error)]
pub enum GoldenError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic: not a golden bundle")]
    BadMagic,
    #[error("unsupported golden bundle version {0}")]
    UnsupportedVersion(u32),
    #[error("golden bundle truncated")]
    Truncated,
    #[error("golden header: {0}")]
    Header(String),
    #[error("blob at offset {offset} with {len} bytes exceeds the {available}-byte blob section")]
    BlobOutOfBounds { offset: usize, len: usize, available: usize },
    #[error("blob offset {0} is not 16-byte aligned")]
    Misaligned(usize),
    #[error("bundle has {bundle} node records but the model graph has {graph} nodes")]
    NodeCount { bundle: usize, graph: usize },
    #[error("bundle node record {position} has id {found}, expected {expected}")]
    NodeId { position: usize, found: usize, expected: usize },
    #[error("node {node}: bundle shape {bundle:?} differs from engine shape {engine:?}")]
    ShapeMismatch { node: usize, bundle: Vec<usize>, engine: Vec<usize> },
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ByteRef {
    offset: usize,
    len: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorRef {
    offset: usize,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct NodeRef {
    id: usize,
    offset: usize,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    model_name: String,
    image: ByteRef,
    input: TensorRef,
    nodes: Vec<NodeRef>,
    probabilities: TensorRef,
    blob_bytes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GoldenBundle {
    pub model_name: String,
    pub image: Vec<u8>,
    pub input: Tensor,
    /// `(node id, expected output)` in node order.
    pub nodes: Vec<(usize, Tensor)>,
    pub probabilities: Vec<f32>,
}

fn tensor_at(blobs: &[u8], r: &TensorRef) -> Result<Tensor, GoldenError> {
    let count: usize = r.shape.iter().product();
    let bytes = slice(blobs, r.offset, count * 4)?;
    let data = bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
    Tensor::new(r.shape.clone(), data).map_err(|e| GoldenError::Header(e.to_string()))
}

fn slice(blobs: &[u8], offset: usize, len: usize) -> Result<&[u8], GoldenError> {
    if !offset.is_multiple_of(ALIGN) {
        return Err(GoldenError::Misaligned(offset));
    }
    offset
        .checked_add(len)
        .and_then(|end| blobs.get(offset..end))
        .ok_or(GoldenError::BlobOutOfBounds {
            offset,
            len,
            available: blobs.len(),
        })
}

impl GoldenBundle {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, GoldenError> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|source| GoldenError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, GoldenError> {
        if bytes.len() < PREAMBLE {
            return Err(GoldenError::Truncated);
        }
        if &bytes[..4] != MAGIC {
            return Err(GoldenError::BadMagic);
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(GoldenError::UnsupportedVersion(version));
        }
        let header_len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
        let header_bytes = bytes.get(PREAMBLE..PREAMBLE + header_len).ok_or(GoldenError::Truncated)?;
        let header: Header = serde_json::from_slice(header_bytes).map_err(|e| GoldenError::Header(e.to_string()))?;
        let blob_start = (PREAMBLE + header_len).div_ceil(ALIGN) * ALIGN;
        let blobs = bytes.get(blob_start..).ok_or(GoldenError::Truncated)?;
        if blobs.len() != header.blob_bytes {
            return Err(GoldenError::Header(format!(
                "blob section is {} bytes, header declares {}",
                blobs.len(),
                header.blob_bytes
            )));
        }
        let image = slice(blobs, header.image.offset, header.image.len)?.to_vec();
        let input = tensor_at(blobs, &header.input)?;
        let nodes = header
            .nodes
            .iter()
            .map(|n| {
                let r = TensorRef {
                    offset: n.offset,
                    shape: n.shape.clone(),
                };
                Ok((n.id, tensor_at(blobs, &r)?))
            })
            .collect::<Result<_, GoldenError>>()?;
        let probabilities = tensor_at(blobs, &header.probabilities)?.into_data();
        Ok(Self {
            model_name: header.model_name,
            image,
            input,
            nodes,
            probabilities,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut blobs = Vec::new();
        let mut push = |bytes: &[u8]| {
            let offset = blobs.len();
            blobs.extend_from_slice(bytes);
            blobs.resize(blobs.len().div_ceil(ALIGN) * ALIGN, 0);
            offset
        };
        let f32_bytes = |v: &[f32]| v.iter().flat_map(|x| x.to_le_bytes()).collect::<Vec<u8>>();
        let image = ByteRef {
            offset: push(&self.image),
            len: self.image.len(),
        };
        let input = TensorRef {
            offset: push(&f32_bytes(self.input.data())),
            shape: self.input.shape().to_vec(),
        };
        let nodes = self
            .nodes
            .iter()
            .map(|(id, t)| NodeRef {
                id: *id,
                offset: push(&f32_bytes(t.data())),
                shape: t.shape().to_vec(),
            })
            .collect();
        let probabilities = TensorRef {
            offset: push(&f32_bytes(&self.probabilities)),
            shape: vec![1, self.probabilities.len()],
        };
        let header = Header {
            model_name: self.model_name.clone(),
            image,
            input,
            nodes,
            probabilities,
            blob_bytes: blobs.len(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(PREAMBLE + json.len() + ALIGN + blobs.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        out.resize(out.len().div_ceil(ALIGN) * ALIGN, 0);
        out.extend_from_slice(&blobs);
        out
    }
}

fn max_abs_diff(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f32::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeDiff {
    pub id: usize,
    pub kind: &'static str,
    pub max_abs_diff: f32,
}

/// Outcome of running a bundle's input through the engine.
#[derive(Debug, Clone, PartialEq)]
pub struct GoldenReplay {
    pub nodes: Vec<NodeDiff>,
    pub probabilities_max_abs_diff: f32,
    pub probabilities: Vec<f32>,
    /// Difference between the bundle's input tensor and this crate's
    /// preprocessing of the bundle image, when the image is large enough.
    pub preprocess_max_abs_diff: Option<f32>,
}

impl GoldenReplay {
    pub fn worst_node(&self) -> Option<&NodeDiff> {
        self.nodes.iter().max_by(|a, b| a.max_abs_diff.total_cmp(&b.max_abs_diff))
    }
}

/// Executes the bundle's input tensor on `model` with capture enabled and
/// compares every node output. The bundle must describe exactly the nodes of
/// the model graph, in order.
pub fn replay(model: &ModelContainer, bundle: &GoldenBundle) -> Result<GoldenReplay, GoldenError> {
    let graph_nodes = model.graph().nodes();
    if bundle.nodes.len() != graph_nodes.len() {
        return Err(GoldenError::NodeCount {
            bundle: bundle.nodes.len(),
            graph: graph_nodes.len(),
        });
    }
    for (position, ((id, _), node)) in bundle.nodes.iter().zip(graph_nodes).enumerate() {
        if *id != node.id {
            return Err(GoldenError::NodeId {
                position,
                found: *id,
                expected: node.id,
            });
        }
    }
    let (out, trace) = execute_graph(model.graph(), &bundle.input, &ExecOptions::capture())?;
    let mut nodes = Vec::with_capacity(graph_nodes.len());
    for ((id, expected), t) in bundle.nodes.iter().zip(&trace.nodes) {
        let actual = t.output.as_ref().expect("capture mode keeps outputs");
        if actual.shape() != expected.shape() {
            return Err(GoldenError::ShapeMismatch {
                node: *id,
                bundle: expected.shape().to_vec(),
                engine: actual.shape().to_vec(),
            });
        }
        nodes.push(NodeDiff {
            id: *id,
            kind: t.kind.as_str(),
            max_abs_diff: max_abs_diff(actual.data(), expected.data()),
        });
    }
    let probabilities = out.into_data();
    let preprocess_max_abs_diff = imaging::decode(&bundle.image)
        .ok()
        .filter(|img| img.width() >= MIN_SIDE && img.height() >= MIN_SIDE)
        .and_then(|img| imaging::preprocess(&img, model.metadata()).ok())
        .filter(|t| t.shape() == bundle.input.shape())
        .map(|t| max_abs_diff(t.data(), bundle.input.data()));
    Ok(GoldenReplay {
        probabilities_max_abs_diff: max_abs_diff(&probabilities, &bundle.probabilities),
        probabilities,
        nodes,
        preprocess_max_abs_diff,
    })
}
