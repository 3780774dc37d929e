//! Aspect-preserving rescale onto the square network input, its inverse for
//! boxes, and cropping of detection regions.

use serde::{Deserialize, Serialize};

use super::{BoundingBox, GrayImage, ImageError};
use crate::scalar::Scalar;

/// Side length of the square network input.
pub const NETWORK_INPUT: usize = 416;

/// Maps source-image coordinates to letterboxed network coordinates:
/// `net = src * scale + pad`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LetterboxTransform {
    pub scale: f64,
    pub pad_x: usize,
    pub pad_y: usize,
    pub source_w: usize,
    pub source_h: usize,
    pub target_w: usize,
    pub target_h: usize,
    pub content_w: usize,
    pub content_h: usize,
}

impl LetterboxTransform {
    pub fn new(source_w: usize, source_h: usize, target_w: usize, target_h: usize) -> Self {
        let scale = (target_w as f64 / source_w as f64).min(target_h as f64 / source_h as f64);
        let content_w = ((source_w as f64 * scale).round() as usize).clamp(1, target_w);
        let content_h = ((source_h as f64 * scale).round() as usize).clamp(1, target_h);
        Self {
            scale,
            pad_x: (target_w - content_w) / 2,
            pad_y: (target_h - content_h) / 2,
            source_w,
            source_h,
            target_w,
            target_h,
            content_w,
            content_h,
        }
    }

    /// Transform for an image that already has the network's shape.
    pub fn identity(width: usize, height: usize) -> Self {
        Self::new(width, height, width, height)
    }

    pub fn to_network<T: Scalar>(&self, b: &BoundingBox<T>) -> BoundingBox<T> {
        let s = T::lit(self.scale);
        BoundingBox {
            x: b.x * s + T::from_usize_lossy(self.pad_x),
            y: b.y * s + T::from_usize_lossy(self.pad_y),
            w: b.w * s,
            h: b.h * s,
        }
    }

    pub fn point_to_source<T: Scalar>(&self, x: T, y: T) -> (T, T) {
        let s = T::lit(self.scale);
        ((x - T::from_usize_lossy(self.pad_x)) / s, (y - T::from_usize_lossy(self.pad_y)) / s)
    }

    /// Content rectangle inside the network input.
    pub fn content_box<T: Scalar>(&self) -> BoundingBox<T> {
        BoundingBox::new(
            T::from_usize_lossy(self.pad_x),
            T::from_usize_lossy(self.pad_y),
            T::from_usize_lossy(self.content_w),
            T::from_usize_lossy(self.content_h),
        )
    }
}

/// Scales `image` by the min ratio into a `target`x`target` canvas with
/// bilinear sampling, centering the content between zero bands.
pub fn letterbox(image: &GrayImage, target: usize) -> (GrayImage, LetterboxTransform) {
    let t = LetterboxTransform::new(image.width(), image.height(), target, target);
    let mut out = GrayImage::filled(target, target, 0);
    let sx = image.width() as f64 / t.content_w as f64;
    let sy = image.height() as f64 / t.content_h as f64;
    let max_x = (image.width() - 1) as f64;
    let max_y = (image.height() - 1) as f64;
    for cy in 0..t.content_h {
        let fy = (((cy as f64) + 0.5) * sy - 0.5).clamp(0.0, max_y);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(image.height() - 1);
        let wy = fy - y0 as f64;
        for cx in 0..t.content_w {
            let fx = (((cx as f64) + 0.5) * sx - 0.5).clamp(0.0, max_x);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(image.width() - 1);
            let wx = fx - x0 as f64;
            let top = image.get(x0, y0) as f64 * (1.0 - wx) + image.get(x1, y0) as f64 * wx;
            let bot = image.get(x0, y1) as f64 * (1.0 - wx) + image.get(x1, y1) as f64 * wx;
            let v = top * (1.0 - wy) + bot * wy;
            out.set(cx + t.pad_x, cy + t.pad_y, v.round().clamp(0.0, 255.0) as u8);
        }
    }
    (out, t)
}

/// Maps a network-space box back to source pixels, clipped to the image.
pub fn unletterbox_box<T: Scalar>(
    b: &BoundingBox<T>,
    t: &LetterboxTransform,
) -> Result<BoundingBox<T>, ImageError> {
    if b.w <= T::zero() || b.h <= T::zero() {
        return Err(ImageError::EmptyDetection);
    }
    let (x0, y0) = t.point_to_source(b.x, b.y);
    let (x1, y1) = t.point_to_source(b.right(), b.bottom());
    let mapped = BoundingBox::from_corners(x0, y0, x1, y1)
        .clamp_to(T::from_usize_lossy(t.source_w), T::from_usize_lossy(t.source_h));
    if mapped.area() <= T::zero() {
        return Err(ImageError::EmptyDetection);
    }
    Ok(mapped)
}

/// A cropped region together with its position in the full image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Crop {
    pub image: GrayImage,
    pub offset_x: usize,
    pub offset_y: usize,
}

impl Crop {
    /// Converts crop-local coordinates to the full image frame.
    pub fn to_full<T: Scalar>(&self, x: T, y: T) -> (T, T) {
        (x + T::from_usize_lossy(self.offset_x), y + T::from_usize_lossy(self.offset_y))
    }

    pub fn to_local<T: Scalar>(&self, x: T, y: T) -> (T, T) {
        (x - T::from_usize_lossy(self.offset_x), y - T::from_usize_lossy(self.offset_y))
    }
}

/// Extracts the pixels covered by `b` (outward-rounded, clipped to the image).
pub fn crop<T: Scalar>(image: &GrayImage, b: &BoundingBox<T>) -> Result<Crop, ImageError> {
    let w = image.width() as f64;
    let h = image.height() as f64;
    let x0 = b.x.to_f64_lossy().max(0.0).floor();
    let y0 = b.y.to_f64_lossy().max(0.0).floor();
    let x1 = b.right().to_f64_lossy().min(w).ceil();
    let y1 = b.bottom().to_f64_lossy().min(h).ceil();
    if !(x1 > x0 && y1 > y0) {
        return Err(ImageError::EmptyCrop);
    }
    let (x0, y0, x1, y1) = (x0 as usize, y0 as usize, x1 as usize, y1 as usize);
    let cropped = GrayImage::from_fn(x1 - x0, y1 - y0, |x, y| image.get(x0 + x, y0 + y));
    Ok(Crop { image: cropped, offset_x: x0, offset_y: y0 })
}
