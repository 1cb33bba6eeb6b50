use super::{ImagingError, RawImage};
use crate::model_io::{ModelMetadata, ResizePolicy};
use crate::tensor::Tensor;

/// Smallest accepted side length for model input.
pub const MIN_SIDE: u32 = 8;

/// Sampling taps for one output coordinate.
#[derive(Clone, Copy)]
struct Tap {
    i0: usize,
    i1: usize,
    frac: f32,
}

/// Bilinear taps with half-pixel centers: output pixel `o` samples source
/// coordinate `(o + 0.5)·src/dst − 0.5`, clamped to `[0, src − 1]`.
fn taps(src: usize, dst: usize, offset: usize, count: usize) -> Vec<Tap> {
    let ratio = src as f64 / dst as f64;
    (offset..offset + count)
        .map(|o| {
            let s = ((o as f64 + 0.5) * ratio - 0.5).clamp(0.0, (src - 1) as f64);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(src - 1);
            Tap {
                i0,
                i1,
                frac: (s - i0 as f64) as f32,
            }
        })
        .collect()
}

/// Bilinear resize of an RGB image to `dst_w × dst_h` (conceptually), returning
/// only the `crop_w × crop_h` window starting at `(crop_x, crop_y)` as planar
/// f32 channels in `[0, 255]`. No intermediate rounding to 8 bits happens.
#[allow(clippy::too_many_arguments)]
pub fn resize_bilinear_f32(
    img: &RawImage,
    dst_w: usize,
    dst_h: usize,
    crop_x: usize,
    crop_y: usize,
    crop_w: usize,
    crop_h: usize,
) -> [Vec<f32>; 3] {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let xs = taps(w, dst_w, crop_x, crop_w);
    let ys = taps(h, dst_h, crop_y, crop_h);
    let px = img.pixels();
    let at = |x: usize, y: usize, c: usize| px[3 * (y * w + x) + c] as f32;
    let mut planes = [
        Vec::with_capacity(crop_w * crop_h),
        Vec::with_capacity(crop_w * crop_h),
        Vec::with_capacity(crop_w * crop_h),
    ];
    for ty in &ys {
        for tx in &xs {
            for (c, plane) in planes.iter_mut().enumerate() {
                let top = at(tx.i0, ty.i0, c) * (1.0 - tx.frac) + at(tx.i1, ty.i0, c) * tx.frac;
                let bottom = at(tx.i0, ty.i1, c) * (1.0 - tx.frac) + at(tx.i1, ty.i1, c) * tx.frac;
                plane.push(top * (1.0 - ty.frac) + bottom * ty.frac);
            }
        }
    }
    planes
}

/// Resize-and-crop plan for a source image under a resize policy.
pub(crate) fn plan(policy: ResizePolicy, w: usize, h: usize, tw: usize, th: usize) -> (usize, usize, usize, usize) {
    match policy {
        ResizePolicy::Stretch => (tw, th, 0, 0),
        ResizePolicy::ShortestSideCenterCrop => {
            let scale = (tw as f64 / w as f64).max(th as f64 / h as f64);
            let rw = ((w as f64 * scale).round() as usize).max(tw);
            let rh = ((h as f64 * scale).round() as usize).max(th);
            (rw, rh, (rw - tw) / 2, (rh - th) / 2)
        }
    }
}

/// Model input tensor `1×3×H×W` for `img` under the model's preprocessing
/// policy: resize (bilinear), crop, then `(pixel·scale − mean[c]) / std[c]`.
pub fn preprocess(img: &RawImage, meta: &ModelMetadata) -> Result<Tensor, ImagingError> {
    if img.width() < MIN_SIDE || img.height() < MIN_SIDE {
        return Err(ImagingError::TooSmall {
            width: img.width(),
            height: img.height(),
            min: MIN_SIDE,
        });
    }
    let (tw, th) = (meta.input.width, meta.input.height);
    let (rw, rh, x0, y0) = plan(
        meta.preprocess.resize_policy,
        img.width() as usize,
        img.height() as usize,
        tw,
        th,
    );
    let planes = resize_bilinear_f32(img, rw, rh, x0, y0, tw, th);
    let p = &meta.preprocess;
    let mut data = Vec::with_capacity(3 * tw * th);
    for (c, plane) in planes.iter().enumerate() {
        let (scale, mean, std) = (p.scale as f32, p.per_channel_mean[c] as f32, p.per_channel_std[c] as f32);
        data.extend(plane.iter().map(|&v| (v * scale - mean) / std));
    }
    Tensor::nchw(3, th, tw, data).map_err(|e| ImagingError::Invalid(e.to_string()))
}
