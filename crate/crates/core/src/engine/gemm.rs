//! Packed f64-accumulating GEMM used by the optimized convolution path.
//!
//! `C[m, n] = Σ_k A[m, k] · B[k, n] + bias[m]`, with `A` packed into row panels
//! of [`MR`] rows and `B` packed into column panels of [`NR`] columns, both
//! k-major and widened to f64. The microkernel keeps an `MR×NR` accumulator
//! tile in registers. Multiplies and adds are never fused, so every dispatch
//! target produces the same bits.

pub const MR: usize = 4;
pub const NR: usize = 8;

/// Target size of one packed block of `B`, in bytes.
const B_BLOCK_BYTES: usize = 192 * 1024;

/// Row-major `M×K` matrix packed into `⌈M/MR⌉` panels of `K×MR` f64 values.
#[derive(Debug, Clone, PartialEq)]
pub struct PackedA {
    rows: usize,
    depth: usize,
    panels: Vec<f64>,
}

impl PackedA {
    pub fn pack(a: &[f32], rows: usize, depth: usize) -> Self {
        assert_eq!(a.len(), rows * depth);
        let n_panels = rows.div_ceil(MR);
        let mut panels = vec![0.0; n_panels * depth * MR];
        for (p, panel) in panels.chunks_exact_mut(depth * MR).enumerate() {
            for r in 0..MR {
                let row = p * MR + r;
                if row >= rows {
                    break;
                }
                let src = &a[row * depth..(row + 1) * depth];
                for (k, &v) in src.iter().enumerate() {
                    panel[k * MR + r] = v as f64;
                }
            }
        }
        Self { rows, depth, panels }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    fn panel(&self, p: usize) -> &[f64] {
        &self.panels[p * self.depth * MR..(p + 1) * self.depth * MR]
    }
}

/// Fills packed `B` panels. `fill(k, col0, dst)` writes `B[k, col0..col0+NR]`
/// into `dst` (already zeroed; columns past the matrix edge stay zero).
pub trait PanelSource {
    fn depth(&self) -> usize;
    fn cols(&self) -> usize;
    fn fill_panel(&self, col0: usize, dst: &mut [f64]);
}

/// Computes `out[m*cols + n]` for all rows of `a` and all columns of `b`.
pub fn gemm<S: PanelSource>(a: &PackedA, b: &S, bias: &[f32], out: &mut [f32]) {
    assert_eq!(a.depth(), b.depth());
    assert_eq!(bias.len(), a.rows());
    assert_eq!(out.len(), a.rows() * b.cols());

    #[cfg(target_arch = "x86_64")]
    {
        if std::is_x86_feature_detected!("avx2") {
            // SAFETY: the feature was detected at runtime just above.
            unsafe { gemm_avx2(a, b, bias, out) };
            return;
        }
    }
    gemm_generic(a, b, bias, out);
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn gemm_avx2<S: PanelSource>(a: &PackedA, b: &S, bias: &[f32], out: &mut [f32]) {
    gemm_generic(a, b, bias, out)
}

#[inline(always)]
fn gemm_generic<S: PanelSource>(a: &PackedA, b: &S, bias: &[f32], out: &mut [f32]) {
    let depth = a.depth();
    let cols = b.cols();
    let panel_len = depth * NR;
    let panels_per_block = (B_BLOCK_BYTES / (panel_len * 8).max(1)).max(1);
    let n_col_panels = cols.div_ceil(NR);
    let n_row_panels = a.rows().div_ceil(MR);

    let mut b_block = vec![0.0f64; panels_per_block * panel_len];
    let mut first_panel = 0;
    while first_panel < n_col_panels {
        let block_panels = panels_per_block.min(n_col_panels - first_panel);
        for (i, dst) in b_block.chunks_exact_mut(panel_len).take(block_panels).enumerate() {
            dst.fill(0.0);
            b.fill_panel((first_panel + i) * NR, dst);
        }
        for rp in 0..n_row_panels {
            let a_panel = a.panel(rp);
            for i in 0..block_panels {
                let b_panel = &b_block[i * panel_len..(i + 1) * panel_len];
                let tile = microkernel(a_panel, b_panel, depth);
                store_tile(&tile, rp * MR, (first_panel + i) * NR, a.rows(), cols, bias, out);
            }
        }
        first_panel += block_panels;
    }
}

#[inline(always)]
fn microkernel(a_panel: &[f64], b_panel: &[f64], depth: usize) -> [[f64; NR]; MR] {
    let mut acc = [[0.0f64; NR]; MR];
    for (a, b) in a_panel
        .chunks_exact(MR)
        .zip(b_panel.chunks_exact(NR))
        .take(depth)
    {
        for r in 0..MR {
            let av = a[r];
            for c in 0..NR {
                acc[r][c] += av * b[c];
            }
        }
    }
    acc
}

#[inline(always)]
fn store_tile(
    tile: &[[f64; NR]; MR],
    row0: usize,
    col0: usize,
    rows: usize,
    cols: usize,
    bias: &[f32],
    out: &mut [f32],
) {
    for (r, tile_row) in tile.iter().enumerate() {
        let row = row0 + r;
        if row >= rows {
            break;
        }
        let b = bias[row] as f64;
        let width = NR.min(cols - col0);
        let dst = &mut out[row * cols + col0..row * cols + col0 + width];
        for (d, &v) in dst.iter_mut().zip(tile_row) {
            *d = (v + b) as f32;
        }
    }
}

/// Plain row-major `K×N` matrix as a panel source.
pub struct DenseB<'a> {
    pub data: &'a [f32],
    pub depth: usize,
    pub cols: usize,
}

impl PanelSource for DenseB<'_> {
    fn depth(&self) -> usize {
        self.depth
    }

    fn cols(&self) -> usize {
        self.cols
    }

    fn fill_panel(&self, col0: usize, dst: &mut [f64]) {
        let width = NR.min(self.cols - col0);
        for k in 0..self.depth {
            let src = &self.data[k * self.cols + col0..k * self.cols + col0 + width];
            for (d, &s) in dst[k * NR..k * NR + width].iter_mut().zip(src) {
                *d = s as f64;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn naive(a: &[f32], b: &[f32], bias: &[f32], m: usize, k: usize, n: usize) -> Vec<f32> {
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                let mut acc = 0.0f64;
                for p in 0..k {
                    acc += a[i * k + p] as f64 * b[p * n + j] as f64;
                }
                out[i * n + j] = (acc + bias[i] as f64) as f32;
            }
        }
        out
    }

    #[test]
    fn matches_naive_on_ragged_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &(m, k, n) in &[(1, 1, 1), (3, 5, 7), (4, 8, 8), (9, 17, 33), (16, 3, 1000)] {
            let a: Vec<f32> = (0..m * k).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b: Vec<f32> = (0..k * n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let bias: Vec<f32> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut out = vec![0.0; m * n];
            gemm(
                &PackedA::pack(&a, m, k),
                &DenseB { data: &b, depth: k, cols: n },
                &bias,
                &mut out,
            );
            assert_eq!(out, naive(&a, &b, &bias, m, k, n), "{m}x{k}x{n}");
        }
    }
}
