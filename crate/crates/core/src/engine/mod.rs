//! Graph executor for small image classifiers.
//!
//! A [`Graph`] is a topologically ordered list of [`Node`]s. Validation runs
//! full shape inference against the declared input geometry, so a graph that
//! validates can only fail at run time on non-finite arithmetic.

pub mod conv;
pub mod gemm;
pub mod ops;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use thiserror::Error;

pub use conv::{conv2d, conv2d_gemm, conv2d_reference, conv2d_with, ConvPath, ConvWeights};
pub use ops::{add, concat, flatten, global_avg_pool, linear, maxpool, silu, softmax, split2};

use crate::model_io::ModelContainer;
use crate::tensor::Tensor;

/// Failure of a single kernel, independent of where it sits in a graph.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OpError {
    #[error("channel mismatch: expected {expected}, got {actual}")]
    ChannelMismatch { expected: usize, actual: usize },
    #[error("{0}")]
    Shape(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("graph has no nodes")]
    Empty,
    #[error("node at position {position} has id {id}; ids must equal their position")]
    NonSequentialId { position: usize, id: usize },
    #[error("node {node} references node {input}, which is not earlier in the graph")]
    ForwardReference { node: usize, input: usize },
    #[error("node {node} ({kind}) takes {expected} input(s), got {actual}")]
    Arity {
        node: usize,
        kind: OpKind,
        expected: &'static str,
        actual: usize,
    },
    #[error("node {node}: the graph must have exactly one INPUT node, at id 0")]
    MisplacedInput { node: usize },
    #[error("node {node}: channel mismatch, expected {expected}, got {actual}")]
    ChannelMismatch {
        node: usize,
        expected: usize,
        actual: usize,
    },
    #[error("node {node}: {detail}")]
    Shape { node: usize, detail: String },
    #[error("final node {node} is {kind}; the graph must end in SOFTMAX")]
    OutputNotSoftmax { node: usize, kind: OpKind },
}

impl GraphError {
    fn from_op(node: usize, err: OpError) -> Self {
        match err {
            OpError::ChannelMismatch { expected, actual } => GraphError::ChannelMismatch {
                node,
                expected,
                actual,
            },
            OpError::Shape(detail) => GraphError::Shape { node, detail },
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EngineError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("input shape {actual:?} does not match the model input {expected:?}")]
    InputShape { expected: Vec<usize>, actual: Vec<usize> },
    #[error("node {node} produced a non-finite value at element {index}")]
    NonFinite { node: usize, index: usize },
    #[error("node {node}: {source}")]
    Op { node: usize, source: OpError },
    #[error("golden bundle: {0}")]
    Golden(String),
}

/// Operator kinds understood by the executor, named as in the container format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpKind {
    Input,
    Conv2d,
    Silu,
    Add,
    Concat,
    Split2,
    MaxPool,
    Gap,
    Linear,
    Softmax,
    DropoutNoop,
    Flatten,
}

impl OpKind {
    pub const ALL: [OpKind; 12] = [
        OpKind::Input,
        OpKind::Conv2d,
        OpKind::Silu,
        OpKind::Add,
        OpKind::Concat,
        OpKind::Split2,
        OpKind::MaxPool,
        OpKind::Gap,
        OpKind::Linear,
        OpKind::Softmax,
        OpKind::DropoutNoop,
        OpKind::Flatten,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OpKind::Input => "INPUT",
            OpKind::Conv2d => "CONV2D",
            OpKind::Silu => "SILU",
            OpKind::Add => "ADD",
            OpKind::Concat => "CONCAT",
            OpKind::Split2 => "SPLIT2",
            OpKind::MaxPool => "MAXPOOL",
            OpKind::Gap => "GAP",
            OpKind::Linear => "LINEAR",
            OpKind::Softmax => "SOFTMAX",
            OpKind::DropoutNoop => "DROPOUT_NOOP",
            OpKind::Flatten => "FLATTEN",
        }
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OpKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        OpKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    Input,
    Conv2d {
        weights: ConvWeights,
        stride: usize,
        padding: usize,
    },
    Silu,
    Add,
    Concat,
    Split2 {
        half: usize,
    },
    MaxPool {
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    Gap,
    Linear {
        weight: Tensor,
        bias: Vec<f32>,
    },
    Softmax,
    DropoutNoop,
    Flatten,
}

impl Op {
    pub fn kind(&self) -> OpKind {
        match self {
            Op::Input => OpKind::Input,
            Op::Conv2d { .. } => OpKind::Conv2d,
            Op::Silu => OpKind::Silu,
            Op::Add => OpKind::Add,
            Op::Concat => OpKind::Concat,
            Op::Split2 { .. } => OpKind::Split2,
            Op::MaxPool { .. } => OpKind::MaxPool,
            Op::Gap => OpKind::Gap,
            Op::Linear { .. } => OpKind::Linear,
            Op::Softmax => OpKind::Softmax,
            Op::DropoutNoop => OpKind::DropoutNoop,
            Op::Flatten => OpKind::Flatten,
        }
    }

    /// Number of weight elements carried by this node.
    pub fn param_count(&self) -> usize {
        match self {
            Op::Conv2d { weights, .. } => weights.kernel().len() + weights.bias().len(),
            Op::Linear { weight, bias } => weight.len() + bias.len(),
            _ => 0,
        }
    }

    fn check_arity(&self, node: usize, actual: usize) -> Result<(), GraphError> {
        let (ok, expected) = match self {
            Op::Input => (actual == 0, "0"),
            Op::Add => (actual == 2, "2"),
            Op::Concat => (actual >= 1, "at least 1"),
            _ => (actual == 1, "1"),
        };
        if ok {
            Ok(())
        } else {
            Err(GraphError::Arity {
                node,
                kind: self.kind(),
                expected,
                actual,
            })
        }
    }

    fn infer_shape(&self, inputs: &[&[usize]]) -> Result<Vec<usize>, OpError> {
        let rank4 = |s: &[usize], what: &str| -> Result<(usize, usize, usize, usize), OpError> {
            match *s {
                [n, c, h, w] => Ok((n, c, h, w)),
                _ => Err(OpError::Shape(format!("{what} expects an NCHW tensor, got {s:?}"))),
            }
        };
        match self {
            Op::Input => unreachable!("INPUT shapes come from the model metadata"),
            Op::Conv2d {
                weights,
                stride,
                padding,
            } => {
                let (n, c, h, w) = rank4(inputs[0], "conv2d")?;
                if c != weights.in_channels() {
                    return Err(OpError::ChannelMismatch {
                        expected: weights.in_channels(),
                        actual: c,
                    });
                }
                let (kh, kw) = weights.kernel_hw();
                match (
                    ops::window_output_dim(h, kh, *stride, *padding),
                    ops::window_output_dim(w, kw, *stride, *padding),
                ) {
                    (Some(oh), Some(ow)) => Ok(vec![n, weights.out_channels(), oh, ow]),
                    _ => Err(OpError::Shape(format!(
                        "kernel {kh}x{kw} (stride {stride}, padding {padding}) does not fit input {h}x{w}"
                    ))),
                }
            }
            Op::Silu | Op::DropoutNoop | Op::Softmax => Ok(inputs[0].to_vec()),
            Op::Add => {
                if inputs[0] != inputs[1] {
                    return Err(OpError::Shape(format!(
                        "add operands differ: {:?} vs {:?}",
                        inputs[0], inputs[1]
                    )));
                }
                Ok(inputs[0].to_vec())
            }
            Op::Concat => {
                let (n, _, h, w) = rank4(inputs[0], "concat")?;
                let mut channels = 0;
                for s in inputs {
                    let (sn, sc, sh, sw) = rank4(s, "concat")?;
                    if (sn, sh, sw) != (n, h, w) {
                        return Err(OpError::Shape(format!(
                            "concat operands differ outside the channel axis: {:?} vs {s:?}",
                            inputs[0]
                        )));
                    }
                    channels += sc;
                }
                Ok(vec![n, channels, h, w])
            }
            Op::Split2 { half } => {
                let (n, c, h, w) = rank4(inputs[0], "split2")?;
                if c % 2 != 0 || *half > 1 {
                    return Err(OpError::Shape(format!(
                        "split2 needs an even channel count and half in {{0, 1}}, got {c} channels, half {half}"
                    )));
                }
                Ok(vec![n, c / 2, h, w])
            }
            Op::MaxPool {
                kernel,
                stride,
                padding,
            } => {
                let (n, c, h, w) = rank4(inputs[0], "maxpool")?;
                match (
                    ops::window_output_dim(h, *kernel, *stride, *padding),
                    ops::window_output_dim(w, *kernel, *stride, *padding),
                ) {
                    (Some(oh), Some(ow)) if padding < kernel => Ok(vec![n, c, oh, ow]),
                    _ => Err(OpError::Shape(format!(
                        "maxpool window {kernel} (stride {stride}, padding {padding}) does not fit {h}x{w}"
                    ))),
                }
            }
            Op::Gap => {
                let (n, c, _, _) = rank4(inputs[0], "gap")?;
                Ok(vec![n, c, 1, 1])
            }
            Op::Flatten => {
                let s = inputs[0];
                Ok(vec![s[0], s[1..].iter().product()])
            }
            Op::Linear { weight, bias } => {
                let s = inputs[0];
                if s.len() == 4 && s[2..] != [1, 1] {
                    return Err(OpError::Shape(format!("linear expects [N, in] or [N, in, 1, 1], got {s:?}")));
                }
                let features: usize = s[1..].iter().product();
                let [out_f, in_f] = *weight.shape() else {
                    return Err(OpError::Shape(format!("linear weight must be rank 2, got {:?}", weight.shape())));
                };
                if in_f != features {
                    return Err(OpError::ChannelMismatch {
                        expected: in_f,
                        actual: features,
                    });
                }
                if bias.len() != out_f {
                    return Err(OpError::Shape(format!("linear bias has {} entries for {out_f} outputs", bias.len())));
                }
                Ok(vec![s[0], out_f])
            }
        }
    }

    fn run(&self, inputs: &[&Tensor], conv_path: ConvPath) -> Result<Tensor, OpError> {
        match self {
            Op::Input => unreachable!("INPUT is bound, not executed"),
            Op::Conv2d {
                weights,
                stride,
                padding,
            } => conv2d_with(inputs[0], weights, *stride, *padding, conv_path),
            Op::Silu => Ok(silu(inputs[0])),
            Op::Add => add(inputs[0], inputs[1]),
            Op::Concat => concat(inputs),
            Op::Split2 { half } => split2(inputs[0], *half),
            Op::MaxPool {
                kernel,
                stride,
                padding,
            } => maxpool(inputs[0], *kernel, *stride, *padding),
            Op::Gap => global_avg_pool(inputs[0]),
            Op::Linear { weight, bias } => linear(inputs[0], weight, bias),
            Op::Softmax => Ok(ops::softmax_rows(inputs[0])),
            Op::DropoutNoop => Ok(inputs[0].clone()),
            Op::Flatten => Ok(flatten(inputs[0])),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: usize,
    pub op: Op,
    pub inputs: Vec<usize>,
}

impl Node {
    pub fn new(id: usize, op: Op, inputs: Vec<usize>) -> Self {
        Self { id, op, inputs }
    }
}

/// A validated operator graph with inferred per-node output shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    nodes: Vec<Node>,
    shapes: Vec<Vec<usize>>,
    last_use: Vec<usize>,
}

impl Graph {
    /// Validates topology, arity and shapes for an `input_shape` input.
    pub fn new(nodes: Vec<Node>, input_shape: &[usize]) -> Result<Self, GraphError> {
        if nodes.is_empty() {
            return Err(GraphError::Empty);
        }
        let mut shapes: Vec<Vec<usize>> = Vec::with_capacity(nodes.len());
        let mut last_use: Vec<usize> = (0..nodes.len()).collect();
        for (position, node) in nodes.iter().enumerate() {
            if node.id != position {
                return Err(GraphError::NonSequentialId { position, id: node.id });
            }
            if let Some(&input) = node.inputs.iter().find(|&&i| i >= node.id) {
                return Err(GraphError::ForwardReference { node: node.id, input });
            }
            node.op.check_arity(node.id, node.inputs.len())?;
            if (node.id == 0) != matches!(node.op, Op::Input) {
                return Err(GraphError::MisplacedInput { node: node.id });
            }
            let shape = if node.id == 0 {
                input_shape.to_vec()
            } else {
                let in_shapes: Vec<&[usize]> = node.inputs.iter().map(|&i| shapes[i].as_slice()).collect();
                node.op
                    .infer_shape(&in_shapes)
                    .map_err(|e| GraphError::from_op(node.id, e))?
            };
            for &i in &node.inputs {
                last_use[i] = node.id;
            }
            shapes.push(shape);
        }
        let last = nodes.last().expect("nonempty");
        if !matches!(last.op, Op::Softmax) {
            return Err(GraphError::OutputNotSoftmax {
                node: last.id,
                kind: last.op.kind(),
            });
        }
        Ok(Self {
            nodes,
            shapes,
            last_use,
        })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.shapes[0]
    }

    pub fn output_shape(&self) -> &[usize] {
        self.shapes.last().expect("nonempty")
    }

    /// Inferred output shape of node `id`.
    pub fn shape_of(&self, id: usize) -> &[usize] {
        &self.shapes[id]
    }

    pub fn param_count(&self) -> usize {
        self.nodes.iter().map(|n| n.op.param_count()).sum()
    }

    pub fn into_nodes(self) -> Vec<Node> {
        self.nodes
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ExecOptions {
    /// Keep every node's output in the trace.
    pub capture: bool,
    pub conv_path: ConvPath,
}

impl ExecOptions {
    pub fn capture() -> Self {
        Self {
            capture: true,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct NodeTrace {
    pub id: usize,
    pub kind: OpKind,
    pub micros: f64,
    /// Present only in capture mode.
    pub output: Option<Tensor>,
}

#[derive(Debug, Clone, Default)]
pub struct ExecutionTrace {
    pub nodes: Vec<NodeTrace>,
}

impl ExecutionTrace {
    pub fn output(&self, id: usize) -> Option<&Tensor> {
        self.nodes.get(id).and_then(|n| n.output.as_ref())
    }

    pub fn total_micros(&self) -> f64 {
        self.nodes.iter().map(|n| n.micros).sum()
    }
}

/// Runs `graph` on one input and returns the final node's output tensor.
pub fn execute_graph(graph: &Graph, input: &Tensor, opts: &ExecOptions) -> Result<(Tensor, ExecutionTrace), EngineError> {
    if input.shape() != graph.input_shape() {
        return Err(EngineError::InputShape {
            expected: graph.input_shape().to_vec(),
            actual: input.shape().to_vec(),
        });
    }
    if let Some(index) = input.first_non_finite() {
        return Err(EngineError::NonFinite { node: 0, index });
    }
    let n = graph.nodes.len();
    let mut values: Vec<Option<Tensor>> = vec![None; n];
    let mut trace = ExecutionTrace {
        nodes: Vec::with_capacity(n),
    };
    for node in &graph.nodes {
        let start = Instant::now();
        let out = if node.id == 0 {
            input.clone()
        } else {
            let args: Vec<&Tensor> = node
                .inputs
                .iter()
                .map(|&i| values[i].as_ref().expect("producer output retained until last use"))
                .collect();
            let out = node
                .op
                .run(&args, opts.conv_path)
                .map_err(|source| EngineError::Op { node: node.id, source })?;
            if let Some(index) = out.first_non_finite() {
                return Err(EngineError::NonFinite { node: node.id, index });
            }
            out
        };
        let micros = start.elapsed().as_secs_f64() * 1e6;
        trace.nodes.push(NodeTrace {
            id: node.id,
            kind: node.op.kind(),
            micros,
            output: opts.capture.then(|| out.clone()),
        });
        values[node.id] = Some(out);
        if !opts.capture {
            for &i in &node.inputs {
                if graph.last_use[i] == node.id {
                    values[i] = None;
                }
            }
        }
    }
    let output = values[n - 1].take().expect("final node executed");
    Ok((output, trace))
}

/// Class probabilities for one preprocessed input.
pub fn execute(model: &ModelContainer, input: &Tensor, opts: &ExecOptions) -> Result<(Vec<f32>, ExecutionTrace), EngineError> {
    let (out, trace) = execute_graph(model.graph(), input, opts)?;
    Ok((out.into_data(), trace))
}
