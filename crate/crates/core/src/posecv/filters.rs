//! Mask production: blur, gradient magnitude, histogram equalization and
//! adaptive mean thresholding.

use crate::imgcore::GrayImage;

use super::{BinaryMask, PoseError};

/// Side of the smoothing kernel.
pub const BLUR_SIZE: usize = 5;
pub const BLUR_SIGMA: f64 = 1.0;
pub const DEFAULT_BLOCK: usize = 15;
pub const DEFAULT_OFFSET: i32 = 5;

/// Normalized 1-D Gaussian taps; the 2-D kernel is their outer product.
pub fn gaussian_taps() -> [f64; BLUR_SIZE] {
    let r = (BLUR_SIZE / 2) as i32;
    let mut taps = [0.0; BLUR_SIZE];
    for (i, t) in taps.iter_mut().enumerate() {
        let d = (i as i32 - r) as f64;
        *t = (-d * d / (2.0 * BLUR_SIGMA * BLUR_SIGMA)).exp();
    }
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Blurred {
    pub image: GrayImage,
    /// Set when the input was smaller than the kernel and passed through.
    pub undersized: bool,
}

/// 5x5 Gaussian blur (sigma 1) with edge replication, applied separably.
pub fn gaussian_blur(image: &GrayImage) -> Blurred {
    if image.width() < BLUR_SIZE || image.height() < BLUR_SIZE {
        log::warn!("{}x{} crop smaller than blur kernel; left unfiltered", image.width(), image.height());
        return Blurred { image: image.clone(), undersized: true };
    }
    let taps = gaussian_taps();
    let r = (BLUR_SIZE / 2) as isize;
    let (w, h) = (image.width(), image.height());
    let mut horiz = vec![0.0f64; w * h];
    for y in 0..h {
        for x in 0..w {
            horiz[y * w + x] = taps
                .iter()
                .enumerate()
                .map(|(k, t)| t * image.get_clamped(x as isize + k as isize - r, y as isize) as f64)
                .sum();
        }
    }
    let out = GrayImage::from_fn(w, h, |x, y| {
        let v: f64 = taps
            .iter()
            .enumerate()
            .map(|(k, t)| {
                let yy = (y as isize + k as isize - r).clamp(0, h as isize - 1) as usize;
                t * horiz[yy * w + x]
            })
            .sum();
        v.round().clamp(0.0, 255.0) as u8
    });
    Blurred { image: out, undersized: false }
}

/// `|Gx| + |Gy|` of the 3x3 Sobel pair, edge-replicated, saturated at 255.
pub fn sobel_magnitude(image: &GrayImage) -> Result<GrayImage, PoseError> {
    if image.width() < 3 || image.height() < 3 {
        return Err(PoseError::TooSmall { width: image.width(), height: image.height() });
    }
    Ok(GrayImage::from_fn(image.width(), image.height(), |x, y| {
        let p = |dx: isize, dy: isize| image.get_clamped(x as isize + dx, y as isize + dy) as i32;
        let gx = (p(1, -1) + 2 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2 * p(-1, 0) + p(-1, 1));
        let gy = (p(-1, 1) + 2 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2 * p(0, -1) + p(1, -1));
        (gx.abs() + gy.abs()).min(255) as u8
    }))
}

/// Classic CDF remap; an image with a single level maps to all zeros.
pub fn equalize_hist(image: &GrayImage) -> GrayImage {
    let mut hist = [0u64; 256];
    for &p in image.pixels() {
        hist[p as usize] += 1;
    }
    let mut cdf = [0u64; 256];
    let mut acc = 0;
    for (c, h) in cdf.iter_mut().zip(hist) {
        acc += h;
        *c = acc;
    }
    let n = image.pixels().len() as u64;
    let cdf_min = cdf.iter().copied().find(|&c| c > 0).unwrap_or(0);
    if n == cdf_min {
        return GrayImage::filled(image.width(), image.height(), 0);
    }
    let denom = (n - cdf_min) as f64;
    let mut lut = [0u8; 256];
    for (v, l) in lut.iter_mut().enumerate() {
        *l = (255.0 * cdf[v].saturating_sub(cdf_min) as f64 / denom).round() as u8;
    }
    GrayImage::from_fn(image.width(), image.height(), |x, y| lut[image.get(x, y) as usize])
}

/// Foreground where a pixel exceeds its `block`x`block` edge-replicated
/// neighbourhood mean by more than `offset`.
pub fn adaptive_mean_threshold(image: &GrayImage, block: usize, offset: i32) -> Result<BinaryMask, PoseError> {
    if block < 3 || block % 2 == 0 {
        return Err(PoseError::InvalidBlock(block));
    }
    let r = block / 2;
    let (w, h) = (image.width(), image.height());
    let (pw, ph) = (w + 2 * r, h + 2 * r);
    // integral image of the replicated-border raster, one extra row/column of zeros
    let mut integral = vec![0i64; (pw + 1) * (ph + 1)];
    for py in 0..ph {
        let mut row = 0i64;
        for px in 0..pw {
            row += image.get_clamped(px as isize - r as isize, py as isize - r as isize) as i64;
            integral[(py + 1) * (pw + 1) + px + 1] = integral[py * (pw + 1) + px + 1] + row;
        }
    }
    let count = (block * block) as i64;
    let mut bits = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let (x0, y0, x1, y1) = (x, y, x + block, y + block);
            let sum = integral[y1 * (pw + 1) + x1] - integral[y0 * (pw + 1) + x1] - integral[y1 * (pw + 1) + x0]
                + integral[y0 * (pw + 1) + x0];
            bits.push(image.get(x, y) as i64 * count > sum + offset as i64 * count);
        }
    }
    Ok(BinaryMask::new(w, h, bits))
}

/// The full mask chain: blur -> Sobel -> equalize -> adaptive threshold.
pub fn binarize_tube_region(crop: &GrayImage, block: usize, offset: i32) -> Result<BinaryMask, PoseError> {
    Ok(binarize_stages(crop, block, offset)?.mask)
}

/// Every intermediate raster of [`binarize_tube_region`], for debugging.
#[derive(Debug, Clone)]
pub struct MaskStages {
    pub blurred: GrayImage,
    pub gradient: GrayImage,
    pub equalized: GrayImage,
    pub mask: BinaryMask,
}

pub fn binarize_stages(crop: &GrayImage, block: usize, offset: i32) -> Result<MaskStages, PoseError> {
    let blurred = gaussian_blur(crop).image;
    let gradient = sobel_magnitude(&blurred)?;
    let equalized = equalize_hist(&gradient);
    let mask = adaptive_mean_threshold(&equalized, block, offset)?;
    Ok(MaskStages { blurred, gradient, equalized, mask })
}
