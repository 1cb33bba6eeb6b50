//! 2-D convolution (cross-correlation, groups = 1, symmetric zero padding).
//!
//! Two routes are kept side by side: a direct nested-loop reference and a
//! patch-matrix (im2col) route feeding the packed GEMM. They must agree to
//! within f32 rounding of the same f64 sums.

use crate::tensor::Tensor;

use super::gemm::{self, PackedA, PanelSource, NR};
use super::ops::window_output_dim;
use super::OpError;

/// Which convolution implementation to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConvPath {
    /// Optimized route (the default).
    #[default]
    Auto,
    Reference,
    Optimized,
}

/// Convolution weights with the kernel pre-packed for the GEMM route.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvWeights {
    kernel: Tensor,
    bias: Vec<f32>,
    packed: PackedA,
}

impl ConvWeights {
    pub fn new(kernel: Tensor, bias: Vec<f32>) -> Result<Self, OpError> {
        let (cout, cin, kh, kw) = kernel
            .dims4()
            .ok_or_else(|| OpError::Shape(format!("conv kernel must be rank 4, got {:?}", kernel.shape())))?;
        if bias.len() != cout {
            return Err(OpError::Shape(format!(
                "conv bias has {} entries for {cout} output channels",
                bias.len()
            )));
        }
        let packed = PackedA::pack(kernel.data(), cout, cin * kh * kw);
        Ok(Self { kernel, bias, packed })
    }

    pub fn kernel(&self) -> &Tensor {
        &self.kernel
    }

    pub fn bias(&self) -> &[f32] {
        &self.bias
    }

    pub fn out_channels(&self) -> usize {
        self.kernel.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.kernel.shape()[1]
    }

    pub fn kernel_hw(&self) -> (usize, usize) {
        (self.kernel.shape()[2], self.kernel.shape()[3])
    }
}

struct Geometry {
    n: usize,
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
}

fn geometry(input: &Tensor, kernel: &Tensor, stride: usize, padding: usize) -> Result<Geometry, OpError> {
    let (n, cin, h, w) = input
        .dims4()
        .ok_or_else(|| OpError::Shape(format!("conv2d expects an NCHW input, got {:?}", input.shape())))?;
    let (cout, kcin, kh, kw) = kernel
        .dims4()
        .ok_or_else(|| OpError::Shape(format!("conv kernel must be rank 4, got {:?}", kernel.shape())))?;
    if kcin != cin {
        return Err(OpError::ChannelMismatch {
            expected: kcin,
            actual: cin,
        });
    }
    match (
        window_output_dim(h, kh, stride, padding),
        window_output_dim(w, kw, stride, padding),
    ) {
        (Some(oh), Some(ow)) => Ok(Geometry {
            n,
            cin,
            h,
            w,
            cout,
            kh,
            kw,
            oh,
            ow,
        }),
        _ => Err(OpError::Shape(format!(
            "kernel {kh}x{kw} (stride {stride}, padding {padding}) does not fit input {h}x{w}"
        ))),
    }
}

/// Convolution through the default route.
pub fn conv2d(input: &Tensor, kernel: &Tensor, bias: &[f32], stride: usize, padding: usize) -> Result<Tensor, OpError> {
    let weights = ConvWeights::new(kernel.clone(), bias.to_vec())?;
    conv2d_with(input, &weights, stride, padding, ConvPath::Auto)
}

pub fn conv2d_with(
    input: &Tensor,
    weights: &ConvWeights,
    stride: usize,
    padding: usize,
    path: ConvPath,
) -> Result<Tensor, OpError> {
    match path {
        ConvPath::Reference => conv2d_reference(input, &weights.kernel, &weights.bias, stride, padding),
        ConvPath::Auto | ConvPath::Optimized => conv2d_gemm(input, weights, stride, padding),
    }
}

/// Direct loop convolution. This is the oracle for the optimized route.
pub fn conv2d_reference(
    input: &Tensor,
    kernel: &Tensor,
    bias: &[f32],
    stride: usize,
    padding: usize,
) -> Result<Tensor, OpError> {
    let g = geometry(input, kernel, stride, padding)?;
    if bias.len() != g.cout {
        return Err(OpError::Shape(format!(
            "conv bias has {} entries for {} output channels",
            bias.len(),
            g.cout
        )));
    }
    let x = input.data();
    let k = kernel.data();
    let mut out = vec![0.0f32; g.n * g.cout * g.oh * g.ow];
    let mut idx = 0;
    for b in 0..g.n {
        for co in 0..g.cout {
            for oy in 0..g.oh {
                for ox in 0..g.ow {
                    let mut acc = 0.0f64;
                    for ci in 0..g.cin {
                        for ky in 0..g.kh {
                            let iy = (oy * stride + ky) as isize - padding as isize;
                            if iy < 0 || iy >= g.h as isize {
                                continue;
                            }
                            for kx in 0..g.kw {
                                let ix = (ox * stride + kx) as isize - padding as isize;
                                if ix < 0 || ix >= g.w as isize {
                                    continue;
                                }
                                let xv = x[((b * g.cin + ci) * g.h + iy as usize) * g.w + ix as usize];
                                let kv = k[((co * g.cin + ci) * g.kh + ky) * g.kw + kx];
                                acc += kv as f64 * xv as f64;
                            }
                        }
                    }
                    out[idx] = (acc + bias[co] as f64) as f32;
                    idx += 1;
                }
            }
        }
    }
    Ok(Tensor::from_parts_unchecked(vec![g.n, g.cout, g.oh, g.ow], out))
}

/// Patch-matrix view of one input image: row `k = (ci, ky, kx)`, column
/// `p = (oy, ox)`. Panels are materialised on demand straight into the
/// GEMM's packed layout, so the full patch matrix never exists in memory.
struct Patches<'a> {
    image: &'a [f32],
    g: &'a Geometry,
    stride: usize,
    padding: usize,
}

impl PanelSource for Patches<'_> {
    fn depth(&self) -> usize {
        self.g.cin * self.g.kh * self.g.kw
    }

    fn cols(&self) -> usize {
        self.g.oh * self.g.ow
    }

    fn fill_panel(&self, col0: usize, dst: &mut [f64]) {
        let g = self.g;
        let width = NR.min(self.cols() - col0);
        let mut origin = [(0isize, 0isize); NR];
        for (c, o) in origin.iter_mut().enumerate().take(width) {
            let p = col0 + c;
            *o = (
                ((p / g.ow) * self.stride) as isize - self.padding as isize,
                ((p % g.ow) * self.stride) as isize - self.padding as isize,
            );
        }
        let mut k = 0;
        for ci in 0..g.cin {
            let plane = &self.image[ci * g.h * g.w..(ci + 1) * g.h * g.w];
            for ky in 0..g.kh {
                for kx in 0..g.kw {
                    let row = &mut dst[k * NR..k * NR + width];
                    for (d, &(y0, x0)) in row.iter_mut().zip(&origin) {
                        let iy = y0 + ky as isize;
                        let ix = x0 + kx as isize;
                        if iy >= 0 && iy < g.h as isize && ix >= 0 && ix < g.w as isize {
                            *d = plane[iy as usize * g.w + ix as usize] as f64;
                        }
                    }
                    k += 1;
                }
            }
        }
    }
}

/// im2col + packed GEMM convolution.
pub fn conv2d_gemm(input: &Tensor, weights: &ConvWeights, stride: usize, padding: usize) -> Result<Tensor, OpError> {
    let g = geometry(input, &weights.kernel, stride, padding)?;
    let image_len = g.cin * g.h * g.w;
    let out_len = g.cout * g.oh * g.ow;
    let mut out = vec![0.0f32; g.n * out_len];
    for (image, dst) in input
        .data()
        .chunks_exact(image_len)
        .zip(out.chunks_exact_mut(out_len))
    {
        let patches = Patches {
            image,
            g: &g,
            stride,
            padding,
        };
        gemm::gemm(&weights.packed, &patches, &weights.bias, dst);
    }
    Ok(Tensor::from_parts_unchecked(vec![g.n, g.cout, g.oh, g.ow], out))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_sum_kernels() {
        let x = Tensor::nchw(1, 1, 1, vec![5.0]).unwrap();
        let k = Tensor::nchw(1, 1, 1, vec![1.0]).unwrap();
        assert_eq!(conv2d(&x, &k, &[0.0], 1, 0).unwrap().data(), &[5.0]);

        let x = Tensor::full(vec![1, 1, 3, 3], 1.0).unwrap();
        let k = Tensor::full(vec![1, 1, 3, 3], 1.0).unwrap();
        let y = conv2d(&x, &k, &[0.0], 1, 0).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1, 1]);
        assert_eq!(y.data(), &[9.0]);
        assert_eq!(conv2d_reference(&x, &k, &[0.0], 1, 0).unwrap(), y);
    }

    #[test]
    fn padding_counts_zeros() {
        let x = Tensor::full(vec![1, 1, 3, 3], 1.0).unwrap();
        let k = Tensor::full(vec![1, 1, 3, 3], 1.0).unwrap();
        let y = conv2d(&x, &k, &[0.5], 1, 1).unwrap();
        assert_eq!(y.data(), &[4.5, 6.5, 4.5, 6.5, 9.5, 6.5, 4.5, 6.5, 4.5]);
    }

    #[test]
    fn channel_mismatch_is_reported() {
        let x = Tensor::zeros(vec![1, 2, 4, 4]).unwrap();
        let k = Tensor::zeros(vec![1, 3, 3, 3]).unwrap();
        assert_eq!(
            conv2d(&x, &k, &[0.0], 1, 1),
            Err(OpError::ChannelMismatch { expected: 3, actual: 2 })
        );
    }

    #[test]
    fn window_must_fit() {
        let x = Tensor::zeros(vec![1, 1, 2, 2]).unwrap();
        let k = Tensor::zeros(vec![1, 1, 3, 3]).unwrap();
        assert!(matches!(conv2d(&x, &k, &[0.0], 1, 0), Err(OpError::Shape(_))));
    }
}
