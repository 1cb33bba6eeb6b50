use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelContainer, ModelIoError, ModelMetadata};
use crate::engine::{ConvWeights, Node, Op, OpKind};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"MSLW";
pub const FORMAT_VERSION: u32 = 1;
const PREAMBLE: usize = 12;
const ALIGN: u64 = 16;

fn align_up(v: u64) -> u64 {
    v.div_ceil(ALIGN) * ALIGN
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    metadata: ModelMetadata,
    nodes: Vec<NodeRecord>,
    blob_bytes: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct NodeRecord {
    id: usize,
    kind: String,
    inputs: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    attrs: Option<Attrs>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<WeightRefs>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct Attrs {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kernel: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    stride: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    padding: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    half: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct WeightRefs {
    weight: BlobRef,
    bias: BlobRef,
}

#[derive(Debug, Serialize, Deserialize)]
struct BlobRef {
    offset: u64,
    shape: Vec<usize>,
}

impl BlobRef {
    fn elements(&self) -> u64 {
        self.shape.iter().map(|&d| d as u64).product()
    }
}

/// Reads and fully validates a container file.
pub fn load_model(path: impl AsRef<Path>) -> Result<ModelContainer, ModelIoError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| ModelIoError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_model(&bytes)
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32, ModelIoError> {
    let slice = bytes.get(offset..offset + 4).ok_or(ModelIoError::Truncated {
        offset,
        needed: 4,
        available: bytes.len().saturating_sub(offset),
    })?;
    Ok(u32::from_le_bytes(slice.try_into().expect("4 bytes")))
}

/// Parses a container from memory.
pub fn read_model(bytes: &[u8]) -> Result<ModelContainer, ModelIoError> {
    let magic = bytes.get(..4).ok_or(ModelIoError::Truncated {
        offset: 0,
        needed: 4,
        available: bytes.len(),
    })?;
    if magic != MAGIC {
        return Err(ModelIoError::BadMagic { found: magic.to_vec() });
    }
    let version = read_u32(bytes, 4)?;
    if version != FORMAT_VERSION {
        return Err(ModelIoError::UnsupportedVersion { version });
    }
    let header_len = read_u32(bytes, 8)? as usize;
    let header_bytes = bytes
        .get(PREAMBLE..PREAMBLE + header_len)
        .ok_or(ModelIoError::Truncated {
            offset: PREAMBLE,
            needed: header_len,
            available: bytes.len() - PREAMBLE,
        })?;
    let header: Header = serde_json::from_slice(header_bytes).map_err(|source| ModelIoError::HeaderJson {
        offset: PREAMBLE,
        source,
    })?;

    let blob_start = align_up((PREAMBLE + header_len) as u64) as usize;
    let available = bytes.len().saturating_sub(blob_start) as u64;
    if available < header.blob_bytes {
        return Err(ModelIoError::TruncatedBlobs {
            offset: bytes.len(),
            declared: header.blob_bytes,
            available,
        });
    }
    if available > header.blob_bytes {
        let offset = blob_start + header.blob_bytes as usize;
        return Err(ModelIoError::TrailingBytes {
            offset,
            extra: bytes.len() - offset,
        });
    }
    let blobs = &bytes[blob_start..];

    let mut cursor = 0u64;
    let mut nodes = Vec::with_capacity(header.nodes.len());
    for record in header.nodes {
        let op = decode_op(&record, blobs, &mut cursor)?;
        nodes.push(Node::new(record.id, op, record.inputs));
    }
    if cursor != header.blob_bytes {
        return Err(ModelIoError::BlobBytesMismatch {
            declared: header.blob_bytes,
            actual: cursor,
        });
    }
    ModelContainer::from_validated_parts(header.metadata, nodes, bytes)
}

fn take_blob(node: usize, blob: &BlobRef, blobs: &[u8], cursor: &mut u64) -> Result<Vec<f32>, ModelIoError> {
    let expected = align_up(*cursor);
    if blob.offset != expected {
        return Err(ModelIoError::BlobLayout {
            node,
            expected,
            actual: blob.offset,
        });
    }
    let bytes = blob.elements() * 4;
    let end = blob.offset.checked_add(bytes).filter(|&e| e <= blobs.len() as u64);
    let Some(end) = end else {
        return Err(ModelIoError::BlobOutOfBounds {
            node,
            offset: blob.offset,
            bytes,
            section: blobs.len() as u64,
        });
    };
    *cursor = end;
    Ok(blobs[blob.offset as usize..end as usize]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect())
}

fn decode_op(record: &NodeRecord, blobs: &[u8], cursor: &mut u64) -> Result<Op, ModelIoError> {
    let node = record.id;
    let kind: OpKind = record.kind.parse().map_err(|kind| ModelIoError::UnknownOpKind { node, kind })?;
    let attr_err = |detail: String| ModelIoError::NodeAttrs { node, detail };
    let attrs = record.attrs.as_ref();
    let attr = |name: &str, get: fn(&Attrs) -> Option<usize>| {
        attrs
            .and_then(get)
            .ok_or_else(|| attr_err(format!("{kind} requires attribute {name:?}")))
    };
    let needs_weights = matches!(kind, OpKind::Conv2d | OpKind::Linear);
    if needs_weights != record.weights.is_some() {
        return Err(attr_err(if needs_weights {
            format!("{kind} requires weights")
        } else {
            format!("{kind} carries no weights")
        }));
    }

    let op = match kind {
        OpKind::Input => Op::Input,
        OpKind::Conv2d => {
            let refs = record.weights.as_ref().expect("checked above");
            let kernel_size = attr("kernel", |a| a.kernel)?;
            let stride = attr("stride", |a| a.stride)?;
            let padding = attr("padding", |a| a.padding)?;
            if stride == 0 {
                return Err(attr_err("stride must be positive".into()));
            }
            let shape = refs.weight.shape.clone();
            if shape.len() != 4 || shape[2] != kernel_size || shape[3] != kernel_size {
                return Err(attr_err(format!(
                    "kernel shape {shape:?} must be [Cout, Cin, {kernel_size}, {kernel_size}] (groups = 1 only)"
                )));
            }
            let kernel = take_blob(node, &refs.weight, blobs, cursor)?;
            let bias = take_blob(node, &refs.bias, blobs, cursor)?;
            let kernel = Tensor::new(shape, kernel).map_err(|e| attr_err(e.to_string()))?;
            let weights = ConvWeights::new(kernel, bias).map_err(|e| attr_err(e.to_string()))?;
            Op::Conv2d {
                weights,
                stride,
                padding,
            }
        }
        OpKind::Linear => {
            let refs = record.weights.as_ref().expect("checked above");
            let shape = refs.weight.shape.clone();
            if shape.len() != 2 {
                return Err(attr_err(format!("linear weight shape {shape:?} must be [out, in]")));
            }
            let weight = take_blob(node, &refs.weight, blobs, cursor)?;
            let bias = take_blob(node, &refs.bias, blobs, cursor)?;
            let weight = Tensor::new(shape, weight).map_err(|e| attr_err(e.to_string()))?;
            Op::Linear { weight, bias }
        }
        OpKind::MaxPool => {
            let stride = attr("stride", |a| a.stride)?;
            if stride == 0 {
                return Err(attr_err("stride must be positive".into()));
            }
            Op::MaxPool {
                kernel: attr("kernel", |a| a.kernel)?,
                stride,
                padding: attr("padding", |a| a.padding)?,
            }
        }
        OpKind::Split2 => Op::Split2 {
            half: attr("half", |a| a.half)?,
        },
        OpKind::Silu => Op::Silu,
        OpKind::Add => Op::Add,
        OpKind::Concat => Op::Concat,
        OpKind::Gap => Op::Gap,
        OpKind::Softmax => Op::Softmax,
        OpKind::DropoutNoop => Op::DropoutNoop,
        OpKind::Flatten => Op::Flatten,
    };
    Ok(op)
}

struct BlobWriter {
    section: Vec<u8>,
}

impl BlobWriter {
    fn push(&mut self, shape: &[usize], values: &[f32]) -> BlobRef {
        let offset = align_up(self.section.len() as u64);
        self.section.resize(offset as usize, 0);
        for v in values {
            self.section.extend_from_slice(&v.to_le_bytes());
        }
        BlobRef {
            offset,
            shape: shape.to_vec(),
        }
    }
}

pub(super) fn serialize(metadata: &ModelMetadata, nodes: &[Node]) -> Result<Vec<u8>, ModelIoError> {
    let mut blobs = BlobWriter { section: Vec::new() };
    let records = nodes
        .iter()
        .map(|node| {
            let (attrs, weights) = match &node.op {
                Op::Conv2d {
                    weights,
                    stride,
                    padding,
                } => {
                    let (kh, kw) = weights.kernel_hw();
                    if kh != kw {
                        return Err(ModelIoError::NodeAttrs {
                            node: node.id,
                            detail: format!("non-square kernel {kh}x{kw} cannot be stored"),
                        });
                    }
                    let attrs = Attrs {
                        kernel: Some(kh),
                        stride: Some(*stride),
                        padding: Some(*padding),
                        ..Attrs::default()
                    };
                    let w = blobs.push(weights.kernel().shape(), weights.kernel().data());
                    let b = blobs.push(&[weights.bias().len()], weights.bias());
                    (Some(attrs), Some(WeightRefs { weight: w, bias: b }))
                }
                Op::Linear { weight, bias } => {
                    let w = blobs.push(weight.shape(), weight.data());
                    let b = blobs.push(&[bias.len()], bias);
                    (None, Some(WeightRefs { weight: w, bias: b }))
                }
                Op::MaxPool {
                    kernel,
                    stride,
                    padding,
                } => (
                    Some(Attrs {
                        kernel: Some(*kernel),
                        stride: Some(*stride),
                        padding: Some(*padding),
                        ..Attrs::default()
                    }),
                    None,
                ),
                Op::Split2 { half } => (
                    Some(Attrs {
                        half: Some(*half),
                        ..Attrs::default()
                    }),
                    None,
                ),
                _ => (None, None),
            };
            Ok(NodeRecord {
                id: node.id,
                kind: node.op.kind().as_str().to_string(),
                inputs: node.inputs.clone(),
                attrs,
                weights,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let header = Header {
        metadata: metadata.clone(),
        nodes: records,
        blob_bytes: blobs.section.len() as u64,
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let blob_start = align_up((PREAMBLE + json.len()) as u64) as usize;
    let mut out = Vec::with_capacity(blob_start + blobs.section.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.resize(blob_start, 0);
    out.extend_from_slice(&blobs.section);
    Ok(out)
}

/// Canonical serialization of a container.
pub fn write_model(model: &ModelContainer) -> Vec<u8> {
    serialize(model.metadata(), model.graph().nodes()).expect("validated containers serialize")
}

pub fn write_model_file(model: &ModelContainer, path: impl AsRef<Path>) -> std::io::Result<()> {
    std::fs::write(path, write_model(model))
}
