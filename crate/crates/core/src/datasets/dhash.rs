use crate::imaging::RawImage;

const W: usize = 9;
const H: usize = 8;

/// Box-filter downsample of an RGB image to `W × H` cells of integer
/// Rec. 601 luma (weights ×1000). Source coordinates are scaled by `W` and
/// `H` so every overlap is an integer and every cell has the same area;
/// cell sums are therefore exact and directly comparable.
fn downsample(img: &RawImage) -> [u64; W * H] {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let px = img.pixels();
    let luma = |x: usize, y: usize| {
        let i = 3 * (y * w + x);
        299 * px[i] as u64 + 587 * px[i + 1] as u64 + 114 * px[i + 2] as u64
    };
    let overlap = |p: usize, unit: usize, lo: usize, hi: usize| (hi.min((p + 1) * unit)).saturating_sub(lo.max(p * unit)) as u64;
    let mut out = [0u64; W * H];
    for oy in 0..H {
        let (y_lo, y_hi) = (oy * h, (oy + 1) * h);
        for ox in 0..W {
            let (x_lo, x_hi) = (ox * w, (ox + 1) * w);
            let mut sum = 0u64;
            for y in y_lo / H..y_hi.div_ceil(H) {
                let wy = overlap(y, H, y_lo, y_hi);
                for x in x_lo / W..x_hi.div_ceil(W) {
                    sum += wy * overlap(x, W, x_lo, x_hi) * luma(x, y);
                }
            }
            out[oy * W + ox] = sum;
        }
    }
    out
}

/// 64-bit difference hash: Rec. 601 luma, area-averaged to 9×8; bit
/// `row·8 + i` is set when cell `i` is darker than cell `i + 1`.
pub fn dhash(img: &RawImage) -> u64 {
    let cells = downsample(img);
    let mut bits = 0u64;
    for row in 0..H {
        for i in 0..W - 1 {
            if cells[row * W + i] < cells[row * W + i + 1] {
                bits |= 1 << (row * 8 + i);
            }
        }
    }
    bits
}

pub fn dhash_hex(img: &RawImage) -> String {
    format!("{:016x}", dhash(img))
}

pub fn hamming(a: u64, b: u64) -> u32 {
    (a ^ b).count_ones()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_image_hashes_to_zero() {
        assert_eq!(dhash(&RawImage::filled(32, 32, [90; 3]).unwrap()), 0);
    }

    #[test]
    fn horizontal_ramp_sets_every_bit() {
        let mut px = Vec::new();
        for _ in 0..16 {
            for x in 0..36u8 {
                px.extend_from_slice(&[x * 7; 3]);
            }
        }
        let img = RawImage::new(36, 16, px).unwrap();
        assert_eq!(dhash(&img), u64::MAX);
        assert_eq!(dhash_hex(&img), "ffffffffffffffff");
    }

    #[test]
    fn tiny_images_still_hash() {
        let img = RawImage::new(2, 1, vec![0, 0, 0, 255, 255, 255]).unwrap();
        let h = dhash(&img);
        assert_eq!(h, 0x1818_1818_1818_1818);
    }

    #[test]
    fn hamming_counts_bits() {
        assert_eq!(hamming(0, 0), 0);
        assert_eq!(hamming(0b1011, 0b0001), 2);
        assert_eq!(hamming(0, u64::MAX), 64);
    }
}
