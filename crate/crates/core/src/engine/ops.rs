//! Elementwise, structural and pooling kernels.
//!
//! All reductions (pooling means, linear layers, softmax normalisation)
//! accumulate in f64 and round once when storing back to f32.

use crate::tensor::Tensor;

use super::OpError;

fn expect_rank4(t: &Tensor, what: &'static str) -> Result<(usize, usize, usize, usize), OpError> {
    t.dims4().ok_or_else(|| OpError::Shape(format!("{what} expects an NCHW tensor, got {:?}", t.shape())))
}

/// `x·σ(x)`, elementwise.
pub fn silu(input: &Tensor) -> Tensor {
    let data = input.data().iter().map(|&x| silu_scalar(x)).collect();
    Tensor::from_parts_unchecked(input.shape().to_vec(), data)
}

#[inline]
pub fn silu_scalar(x: f32) -> f32 {
    x / (1.0 + (-x).exp())
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor, OpError> {
    if a.shape() != b.shape() {
        return Err(OpError::Shape(format!(
            "add operands differ: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect();
    Ok(Tensor::from_parts_unchecked(a.shape().to_vec(), data))
}

/// Concatenate along the channel axis.
pub fn concat(parts: &[&Tensor]) -> Result<Tensor, OpError> {
    let first = parts
        .first()
        .ok_or_else(|| OpError::Shape("concat of zero tensors".into()))?;
    let (n, _, h, w) = expect_rank4(first, "concat")?;
    let mut channels = 0;
    for part in parts {
        let (pn, pc, ph, pw) = expect_rank4(part, "concat")?;
        if (pn, ph, pw) != (n, h, w) {
            return Err(OpError::Shape(format!(
                "concat operands differ outside the channel axis: {:?} vs {:?}",
                first.shape(),
                part.shape()
            )));
        }
        channels += pc;
    }
    let plane = h * w;
    let mut data = Vec::with_capacity(n * channels * plane);
    for b in 0..n {
        for part in parts {
            let per_item = part.features();
            data.extend_from_slice(&part.data()[b * per_item..(b + 1) * per_item]);
        }
    }
    Ok(Tensor::from_parts_unchecked(vec![n, channels, h, w], data))
}

/// Channel half `half` (0 = first, 1 = second) of a tensor with an even channel count.
pub fn split2(input: &Tensor, half: usize) -> Result<Tensor, OpError> {
    let (n, c, h, w) = expect_rank4(input, "split2")?;
    if c % 2 != 0 {
        return Err(OpError::Shape(format!("split2 needs an even channel count, got {c}")));
    }
    if half > 1 {
        return Err(OpError::Shape(format!("split2 half must be 0 or 1, got {half}")));
    }
    let half_len = c / 2 * h * w;
    let mut data = Vec::with_capacity(n * half_len);
    for b in 0..n {
        let start = b * c * h * w + half * half_len;
        data.extend_from_slice(&input.data()[start..start + half_len]);
    }
    Ok(Tensor::from_parts_unchecked(vec![n, c / 2, h, w], data))
}

/// Output extent of a sliding window, or `None` when the window does not fit.
pub fn window_output_dim(size: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = size + 2 * padding;
    if kernel == 0 || stride == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

/// Window maximum. Padded positions never win.
pub fn maxpool(input: &Tensor, kernel: usize, stride: usize, padding: usize) -> Result<Tensor, OpError> {
    let (n, c, h, w) = expect_rank4(input, "maxpool")?;
    let (oh, ow) = match (
        window_output_dim(h, kernel, stride, padding),
        window_output_dim(w, kernel, stride, padding),
    ) {
        (Some(oh), Some(ow)) => (oh, ow),
        _ => {
            return Err(OpError::Shape(format!(
                "maxpool window {kernel} (stride {stride}, padding {padding}) does not fit {h}x{w}"
            )))
        }
    };
    if padding >= kernel {
        return Err(OpError::Shape(format!(
            "maxpool padding {padding} must be smaller than the window {kernel}"
        )));
    }
    let src = input.data();
    let mut out = Vec::with_capacity(n * c * oh * ow);
    for plane in src.chunks_exact(h * w) {
        for oy in 0..oh {
            let y0 = (oy * stride) as isize - padding as isize;
            for ox in 0..ow {
                let x0 = (ox * stride) as isize - padding as isize;
                let mut best = f32::NEG_INFINITY;
                for ky in 0..kernel as isize {
                    let y = y0 + ky;
                    if y < 0 || y >= h as isize {
                        continue;
                    }
                    let row = &plane[y as usize * w..(y as usize + 1) * w];
                    for kx in 0..kernel as isize {
                        let x = x0 + kx;
                        if x >= 0 && x < w as isize {
                            best = best.max(row[x as usize]);
                        }
                    }
                }
                out.push(best);
            }
        }
    }
    Ok(Tensor::from_parts_unchecked(vec![n, c, oh, ow], out))
}

/// Spatial mean per channel, `N×C×H×W → N×C×1×1`.
pub fn global_avg_pool(input: &Tensor) -> Result<Tensor, OpError> {
    let (n, c, h, w) = expect_rank4(input, "global_avg_pool")?;
    let count = (h * w) as f64;
    let out = input
        .data()
        .chunks_exact(h * w)
        .map(|plane| {
            let sum: f64 = plane.iter().map(|&v| v as f64).sum();
            (sum / count) as f32
        })
        .collect();
    Ok(Tensor::from_parts_unchecked(vec![n, c, 1, 1], out))
}

/// `N×C×H×W → N×(C·H·W)`; rank-2 inputs pass through.
pub fn flatten(input: &Tensor) -> Tensor {
    let n = input.shape()[0];
    Tensor::from_parts_unchecked(vec![n, input.features()], input.data().to_vec())
}

/// `y = W·x + b` per batch row. Accepts `[N, in]` or `[N, in, 1, 1]` inputs.
pub fn linear(input: &Tensor, weight: &Tensor, bias: &[f32]) -> Result<Tensor, OpError> {
    let n = input.shape()[0];
    let features = input.features();
    if input.rank() == 4 && input.shape()[2..] != [1, 1] {
        return Err(OpError::Shape(format!(
            "linear expects [N, in] or [N, in, 1, 1], got {:?}",
            input.shape()
        )));
    }
    let (out_features, in_features) = match *weight.shape() {
        [o, i] => (o, i),
        _ => return Err(OpError::Shape(format!("linear weight must be rank 2, got {:?}", weight.shape()))),
    };
    if in_features != features {
        return Err(OpError::ChannelMismatch {
            expected: in_features,
            actual: features,
        });
    }
    if bias.len() != out_features {
        return Err(OpError::Shape(format!(
            "linear bias has {} entries for {out_features} outputs",
            bias.len()
        )));
    }
    let mut out = Vec::with_capacity(n * out_features);
    for row in input.data().chunks_exact(features) {
        for (w_row, &b) in weight.data().chunks_exact(in_features).zip(bias) {
            let acc: f64 = w_row
                .iter()
                .zip(row)
                .fold(0.0, |acc, (&w, &x)| acc + w as f64 * x as f64);
            out.push((acc + b as f64) as f32);
        }
    }
    Ok(Tensor::from_parts_unchecked(vec![n, out_features], out))
}

/// Numerically shifted softmax of a single logit vector.
pub fn softmax(logits: &[f32]) -> Vec<f32> {
    let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let exps: Vec<f64> = logits.iter().map(|&l| (l as f64 - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|e| (e / total) as f32).collect()
}

/// Row-wise softmax over the feature axis of each batch item.
pub fn softmax_rows(input: &Tensor) -> Tensor {
    let features = input.features();
    let data = input
        .data()
        .chunks_exact(features)
        .flat_map(softmax)
        .collect();
    Tensor::from_parts_unchecked(input.shape().to_vec(), data)
}
