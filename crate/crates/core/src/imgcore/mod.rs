//! Raster containers, PGM/PFM I/O and the letterbox geometry that bridges
//! camera frames and the network's square input.

mod bbox;
mod letterbox;
mod pnm;

use std::path::PathBuf;

use thiserror::Error;

pub use bbox::BoundingBox;
pub use letterbox::{crop, letterbox, unletterbox_box, Crop, LetterboxTransform, NETWORK_INPUT};
pub use pnm::{
    decode_pfm, decode_pgm, encode_pfm, encode_pgm, load_pfm, load_pgm, save_pfm, save_pgm,
    PfmEndian, PfmLoad,
};

/// Disparity value used for pixels without a valid stereo match.
pub const INVALID_DISPARITY: f32 = -1.0;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("parse error at byte {offset}: {msg}")]
    Parse { offset: usize, msg: String },
    #[error("unsupported format: {0}")]
    Unsupported(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid dimensions {width}x{height} for {len} samples")]
    InvalidDims { width: usize, height: usize, len: usize },
    #[error("box lies entirely outside the image content")]
    EmptyDetection,
    #[error("crop region has zero area")]
    EmptyCrop,
}

/// Single-channel 8-bit raster, row-major.
#[derive(Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl std::fmt::Debug for GrayImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GrayImage")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(ImageError::InvalidDims { width, height, len: pixels.len() });
        }
        Ok(Self { width, height, pixels })
    }

    /// # Panics
    /// If either dimension is zero.
    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        Self { width, height, pixels: vec![value; width * height] }
    }

    /// # Panics
    /// If either dimension is zero.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self { width, height, pixels }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.pixels[y * self.width + x] = v;
    }

    /// Pixel lookup with edge replication outside the raster.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> u8 {
        let cx = x.clamp(0, self.width as isize - 1) as usize;
        let cy = y.clamp(0, self.height as isize - 1) as usize;
        self.pixels[cy * self.width + cx]
    }

    pub fn row(&self, y: usize) -> &[u8] {
        &self.pixels[y * self.width..(y + 1) * self.width]
    }
}

/// Per-pixel disparities in pixels; non-positive values mark invalid matches.
#[derive(Clone, PartialEq)]
pub struct DisparityImage {
    width: usize,
    height: usize,
    values: Vec<f32>,
}

impl std::fmt::Debug for DisparityImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DisparityImage")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl DisparityImage {
    pub fn new(width: usize, height: usize, values: Vec<f32>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 || values.len() != width * height {
            return Err(ImageError::InvalidDims { width, height, len: values.len() });
        }
        Ok(Self { width, height, values })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut values = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y));
            }
        }
        Self { width, height, values }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn values(&self) -> &[f32] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.values[y * self.width + x]
    }

    #[inline]
    pub fn is_valid(d: f32) -> bool {
        d.is_finite() && d > 0.0
    }

    /// Disparity at `(x, y)` if it is a valid match.
    pub fn valid_at(&self, x: usize, y: usize) -> Option<f32> {
        let d = self.get(x, y);
        Self::is_valid(d).then_some(d)
    }
}
