use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::RawImage;

/// One concrete augmentation. Applied in the order: flips, rotation,
/// saturation, brightness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationSpec {
    pub horizontal_flip: bool,
    pub vertical_flip: bool,
    /// Counter-clockwise, in `[-180, 180]`.
    pub rotation_degrees: f64,
    pub saturation_factor: f64,
    pub brightness_factor: f64,
    /// Seed the parameters were sampled from (provenance only).
    pub seed: u64,
}

impl AugmentationSpec {
    pub fn identity() -> Self {
        Self {
            horizontal_flip: false,
            vertical_flip: false,
            rotation_degrees: 0.0,
            saturation_factor: 1.0,
            brightness_factor: 1.0,
            seed: 0,
        }
    }
}

/// Ranges augmentation parameters are drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationPolicy {
    pub flip_probability: f64,
    pub max_rotation_degrees: f64,
    pub saturation_range: (f64, f64),
    pub brightness_range: (f64, f64),
}

impl Default for AugmentationPolicy {
    fn default() -> Self {
        Self {
            flip_probability: 0.5,
            max_rotation_degrees: 30.0,
            saturation_range: (0.5, 1.5),
            brightness_range: (0.5, 1.5),
        }
    }
}

impl AugmentationPolicy {
    /// Deterministic draw: the same seed always yields the same spec.
    pub fn sample(&self, seed: u64) -> AugmentationSpec {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut uniform = |lo: f64, hi: f64| if hi > lo { rng.random_range(lo..hi) } else { lo };
        let horizontal_flip = uniform(0.0, 1.0) < self.flip_probability;
        let vertical_flip = uniform(0.0, 1.0) < self.flip_probability;
        let r = self.max_rotation_degrees.clamp(0.0, 180.0);
        AugmentationSpec {
            horizontal_flip,
            vertical_flip,
            rotation_degrees: uniform(-r, r),
            saturation_factor: uniform(self.saturation_range.0, self.saturation_range.1),
            brightness_factor: uniform(self.brightness_range.0, self.brightness_range.1),
            seed,
        }
    }
}

fn to_u8(v: f64) -> u8 {
    (v + 0.5).floor().clamp(0.0, 255.0) as u8
}

fn flip(img: &RawImage, horizontal: bool, vertical: bool) -> RawImage {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let src = img.pixels();
    let mut out = Vec::with_capacity(src.len());
    for y in 0..h {
        let sy = if vertical { h - 1 - y } else { y };
        for x in 0..w {
            let sx = if horizontal { w - 1 - x } else { x };
            let i = 3 * (sy * w + sx);
            out.extend_from_slice(&src[i..i + 3]);
        }
    }
    RawImage::new(img.width(), img.height(), out).expect("same size")
}

/// `(cos, sin)` with exact values at multiples of 90°.
fn cos_sin(degrees: f64) -> (f64, f64) {
    let quarter = degrees / 90.0;
    if quarter == quarter.round() {
        match (quarter as i64).rem_euclid(4) {
            0 => (1.0, 0.0),
            1 => (0.0, 1.0),
            2 => (-1.0, 0.0),
            _ => (0.0, -1.0),
        }
    } else {
        let r = degrees.to_radians();
        (r.cos(), r.sin())
    }
}

/// Rotation about the image center on a same-size canvas. Samples bilinearly;
/// coordinates outside the source clamp to the nearest edge pixel.
fn rotate(img: &RawImage, degrees: f64) -> RawImage {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let (cos, sin) = cos_sin(degrees);
    let src = img.pixels();
    let at = |x: usize, y: usize, c: usize| src[3 * (y * w + x) + c] as f64;
    let mut out = Vec::with_capacity(src.len());
    for y in 0..h {
        for x in 0..w {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            // Inverse of a counter-clockwise turn in y-down image coordinates.
            let sx = (cos * dx - sin * dy + cx).clamp(0.0, (w - 1) as f64);
            let sy = (sin * dx + cos * dy + cy).clamp(0.0, (h - 1) as f64);
            let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
            let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
            let (fx, fy) = (sx - x0 as f64, sy - y0 as f64);
            for c in 0..3 {
                let top = at(x0, y0, c) * (1.0 - fx) + at(x1, y0, c) * fx;
                let bottom = at(x0, y1, c) * (1.0 - fx) + at(x1, y1, c) * fx;
                out.push(to_u8(top * (1.0 - fy) + bottom * fy));
            }
        }
    }
    RawImage::new(img.width(), img.height(), out).expect("same size")
}

/// Scales HSV saturation by `factor` with hue and value fixed, clamping
/// saturation to 1.
fn scale_saturation(img: &RawImage, factor: f64) -> RawImage {
    let out = img
        .pixels()
        .chunks_exact(3)
        .flat_map(|p| {
            let v = p.iter().copied().max().expect("3 channels") as f64;
            let min = p.iter().copied().min().expect("3 channels") as f64;
            let s = if v > 0.0 { (v - min) / v } else { 0.0 };
            let f = if s > 0.0 { factor.min(1.0 / s) } else { factor };
            p.iter().map(move |&c| to_u8(v - (v - c as f64) * f)).collect::<Vec<_>>()
        })
        .collect();
    RawImage::new(img.width(), img.height(), out).expect("same size")
}

/// Scales HSV value by `factor` with hue and saturation fixed, clamping
/// value to 255.
fn scale_brightness(img: &RawImage, factor: f64) -> RawImage {
    let out = img
        .pixels()
        .chunks_exact(3)
        .flat_map(|p| {
            let v = p.iter().copied().max().expect("3 channels") as f64;
            let f = if v * factor > 255.0 { 255.0 / v } else { factor };
            p.iter().map(move |&c| to_u8(c as f64 * f)).collect::<Vec<_>>()
        })
        .collect();
    RawImage::new(img.width(), img.height(), out).expect("same size")
}

/// Applies `spec` to `img`. Steps whose parameters are neutral are skipped,
/// so the identity spec returns a bitwise copy.
pub fn augment(img: &RawImage, spec: &AugmentationSpec) -> RawImage {
    let mut out = if spec.horizontal_flip || spec.vertical_flip {
        flip(img, spec.horizontal_flip, spec.vertical_flip)
    } else {
        img.clone()
    };
    if spec.rotation_degrees.rem_euclid(360.0) != 0.0 {
        out = rotate(&out, spec.rotation_degrees);
    }
    if spec.saturation_factor != 1.0 {
        out = scale_saturation(&out, spec.saturation_factor);
    }
    if spec.brightness_factor != 1.0 {
        out = scale_brightness(&out, spec.brightness_factor);
    }
    out
}
