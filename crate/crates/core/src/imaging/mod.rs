//! Image decoding, model-input preprocessing and deterministic augmentation.

mod augment;
mod preprocess;

use std::io::Cursor;

use image::{DynamicImage, ImageDecoder, ImageFormat, ImageReader};
use thiserror::Error;

pub use augment::{augment, AugmentationPolicy, AugmentationSpec};
pub use preprocess::{preprocess, resize_bilinear_f32, MIN_SIDE};

#[derive(Debug, Error)]
pub enum ImagingError {
    #[error("unsupported image format (detected: {detected})")]
    Unsupported { detected: String },
    #[error("corrupt {format} image: {message}")]
    Corrupt { format: String, message: String },
    #[error("image is {width}x{height}; both sides must be at least {min} pixels")]
    TooSmall { width: u32, height: u32, min: u32 },
    #[error("invalid image: {0}")]
    Invalid(String),
    #[error("encoding failed: {0}")]
    Encode(String),
}

/// 8-bit RGB image, row-major, three bytes per pixel.
#[derive(Clone, PartialEq, Eq)]
pub struct RawImage {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl std::fmt::Debug for RawImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RawImage")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl RawImage {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, ImagingError> {
        if width == 0 || height == 0 {
            return Err(ImagingError::Invalid(format!("{width}x{height} has an empty side")));
        }
        let expected = 3 * width as usize * height as usize;
        if pixels.len() != expected {
            return Err(ImagingError::Invalid(format!(
                "{width}x{height} RGB needs {expected} bytes, got {}",
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Result<Self, ImagingError> {
        let pixels = rgb.repeat(width as usize * height as usize);
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = 3 * (y as usize * self.width as usize + x as usize);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    fn to_rgb_image(&self) -> image::RgbImage {
        image::RgbImage::from_raw(self.width, self.height, self.pixels.clone()).expect("length checked")
    }

    pub fn encode_png(&self) -> Result<Vec<u8>, ImagingError> {
        let mut out = Cursor::new(Vec::new());
        self.to_rgb_image()
            .write_to(&mut out, ImageFormat::Png)
            .map_err(|e| ImagingError::Encode(e.to_string()))?;
        Ok(out.into_inner())
    }

    pub fn encode_jpeg(&self, quality: u8) -> Result<Vec<u8>, ImagingError> {
        let mut out = Vec::new();
        let encoder = image::codecs::jpeg::JpegEncoder::new_with_quality(&mut out, quality);
        self.to_rgb_image()
            .write_with_encoder(encoder)
            .map_err(|e| ImagingError::Encode(e.to_string()))?;
        Ok(out)
    }

    /// Rec. 601 luma per pixel, in `[0, 255]`.
    pub fn luma(&self) -> Vec<f64> {
        self.pixels
            .chunks_exact(3)
            .map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64)
            .collect()
    }
}

/// Decodes PNG or baseline JPEG bytes to RGB8, applying EXIF orientation.
pub fn decode(bytes: &[u8]) -> Result<RawImage, ImagingError> {
    let reader = ImageReader::new(Cursor::new(bytes))
        .with_guessed_format()
        .map_err(|e| ImagingError::Invalid(e.to_string()))?;
    let format = match reader.format() {
        Some(f @ (ImageFormat::Png | ImageFormat::Jpeg)) => f,
        Some(other) => {
            return Err(ImagingError::Unsupported {
                detected: format!("{other:?}"),
            })
        }
        None => {
            return Err(ImagingError::Unsupported {
                detected: "unknown".into(),
            })
        }
    };
    let corrupt = |e: image::ImageError| ImagingError::Corrupt {
        format: format!("{format:?}").to_uppercase(),
        message: e.to_string(),
    };
    let mut decoder = reader.into_decoder().map_err(corrupt)?;
    let orientation = decoder.orientation().map_err(corrupt)?;
    let mut img = DynamicImage::from_decoder(decoder).map_err(corrupt)?;
    img.apply_orientation(orientation);
    let rgb = img.into_rgb8();
    let (w, h) = rgb.dimensions();
    RawImage::new(w, h, rgb.into_raw())
}
