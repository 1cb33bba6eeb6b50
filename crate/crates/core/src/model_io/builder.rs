use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{InputGeometry, ModelContainer, ModelIoError, ModelMetadata, PreprocessPolicy};
use crate::engine::{ConvWeights, Node, Op};
use crate::tensor::Tensor;

/// Incremental construction of a topologically ordered node list.
#[derive(Debug, Default)]
pub struct GraphBuilder {
    nodes: Vec<Node>,
}

impl GraphBuilder {
    /// Starts a graph whose node 0 is the INPUT.
    pub fn new() -> Self {
        Self {
            nodes: vec![Node::new(0, Op::Input, vec![])],
        }
    }

    pub fn input(&self) -> usize {
        0
    }

    pub fn push(&mut self, op: Op, inputs: Vec<usize>) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::new(id, op, inputs));
        id
    }

    pub fn conv(&mut self, from: usize, weights: ConvWeights, stride: usize, padding: usize) -> usize {
        self.push(
            Op::Conv2d {
                weights,
                stride,
                padding,
            },
            vec![from],
        )
    }

    pub fn silu(&mut self, from: usize) -> usize {
        self.push(Op::Silu, vec![from])
    }

    pub fn add(&mut self, a: usize, b: usize) -> usize {
        self.push(Op::Add, vec![a, b])
    }

    pub fn concat(&mut self, parts: Vec<usize>) -> usize {
        self.push(Op::Concat, parts)
    }

    pub fn split2(&mut self, from: usize) -> (usize, usize) {
        let lo = self.push(Op::Split2 { half: 0 }, vec![from]);
        let hi = self.push(Op::Split2 { half: 1 }, vec![from]);
        (lo, hi)
    }

    pub fn finish(self) -> Vec<Node> {
        self.nodes
    }
}

struct RandomInit {
    rng: ChaCha8Rng,
}

impl RandomInit {
    /// Uniform weights with variance `2 / fan_in`, small biases.
    fn conv(&mut self, cout: usize, cin: usize, k: usize) -> ConvWeights {
        let fan_in = (cin * k * k) as f32;
        let bound = (6.0 / fan_in).sqrt();
        let kernel: Vec<f32> = (0..cout * cin * k * k)
            .map(|_| self.rng.random_range(-bound..bound))
            .collect();
        let bias: Vec<f32> = (0..cout).map(|_| self.rng.random_range(-0.05..0.05)).collect();
        ConvWeights::new(Tensor::new(vec![cout, cin, k, k], kernel).expect("shape"), bias).expect("bias")
    }

    fn linear(&mut self, out: usize, inp: usize) -> (Tensor, Vec<f32>) {
        let bound = (1.0 / inp as f32).sqrt();
        let w: Vec<f32> = (0..out * inp).map(|_| self.rng.random_range(-bound..bound)).collect();
        let b: Vec<f32> = (0..out).map(|_| self.rng.random_range(-bound..bound)).collect();
        (Tensor::new(vec![out, inp], w).expect("shape"), b)
    }
}

/// Convolution (batch-norm already folded in) followed by SiLU.
fn conv_block(g: &mut GraphBuilder, init: &mut RandomInit, from: usize, cin: usize, cout: usize, k: usize, s: usize) -> usize {
    let conv = g.conv(from, init.conv(cout, cin, k), s, k / 2);
    g.silu(conv)
}

/// Cross-stage partial block: 1×1 conv, split in halves, `n` residual
/// bottlenecks chained on the second half, concat of everything, 1×1 conv.
fn c2f(g: &mut GraphBuilder, init: &mut RandomInit, from: usize, cin: usize, cout: usize, n: usize) -> usize {
    let hidden = cout / 2;
    let stem = conv_block(g, init, from, cin, 2 * hidden, 1, 1);
    let (lo, hi) = g.split2(stem);
    let mut parts = vec![lo, hi];
    let mut last = hi;
    for _ in 0..n {
        let a = conv_block(g, init, last, hidden, hidden, 3, 1);
        let b = conv_block(g, init, a, hidden, hidden, 3, 1);
        last = g.add(last, b);
        parts.push(last);
    }
    let cat = g.concat(parts);
    conv_block(g, init, cat, (2 + n) * hidden, cout, 1, 1)
}

/// A randomly initialised nano-scale classification network at 224×224:
/// a five-stage strided backbone with cross-stage partial blocks
/// (16-32-64-128-256 channels), a 1280-channel 1×1 head, global pooling,
/// dropout and a linear classifier. With three classes this is about
/// 1.44M parameters, roughly 5.8 MB as a container.
pub fn nano_classifier(class_names: Vec<String>, seed: u64) -> Result<ModelContainer, ModelIoError> {
    let mut init = RandomInit {
        rng: ChaCha8Rng::seed_from_u64(seed),
    };
    let mut g = GraphBuilder::new();
    let x = g.input();
    let x = conv_block(&mut g, &mut init, x, 3, 16, 3, 2);
    let x = conv_block(&mut g, &mut init, x, 16, 32, 3, 2);
    let x = c2f(&mut g, &mut init, x, 32, 32, 1);
    let x = conv_block(&mut g, &mut init, x, 32, 64, 3, 2);
    let x = c2f(&mut g, &mut init, x, 64, 64, 2);
    let x = conv_block(&mut g, &mut init, x, 64, 128, 3, 2);
    let x = c2f(&mut g, &mut init, x, 128, 128, 2);
    let x = conv_block(&mut g, &mut init, x, 128, 256, 3, 2);
    let x = c2f(&mut g, &mut init, x, 256, 256, 1);
    let x = conv_block(&mut g, &mut init, x, 256, 1280, 1, 1);
    let x = g.push(Op::Gap, vec![x]);
    let x = g.push(Op::DropoutNoop, vec![x]);
    let x = g.push(Op::Flatten, vec![x]);
    let (weight, bias) = init.linear(class_names.len(), 1280);
    let x = g.push(Op::Linear { weight, bias }, vec![x]);
    g.push(Op::Softmax, vec![x]);

    let nodes = g.finish();
    let param_count = nodes.iter().map(|n| n.op.param_count() as u64).sum();
    let metadata = ModelMetadata {
        model_name: "nano-cls-random".into(),
        class_names,
        input: InputGeometry::rgb(224, 224),
        preprocess: PreprocessPolicy::default(),
        param_count,
        source_fingerprint: format!("random-init seed={seed}"),
        training: Some(crate::training::TrainingConfig::default()),
    };
    ModelContainer::new(metadata, nodes)
}
