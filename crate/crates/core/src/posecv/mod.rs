//! Classical-CV pose estimation inside a detection crop: binary mask,
//! contour selection, principal-axis fit and contour/line intersection.

mod contours;
mod filters;
mod linefit;
mod mask;
mod pose;

use thiserror::Error;

pub use contours::{find_contours, point_in_polygon, select_tube_contour, Contour, Moments, Selection};
pub use filters::{
    adaptive_mean_threshold, binarize_stages, binarize_tube_region, equalize_hist, gaussian_blur, gaussian_taps,
    sobel_magnitude, Blurred, MaskStages, BLUR_SIGMA, BLUR_SIZE, DEFAULT_BLOCK, DEFAULT_OFFSET,
};
pub use linefit::{fit_line_least_squares, LineFit, Point2, TlsFit, LOW_ANISOTROPY_RATIO};
pub use mask::BinaryMask;
pub use pose::{endpoints_from_contour, estimate_pose_2d, estimate_pose_traced, PoseParams, PoseTrace, TubePoseImage};

#[derive(Debug, Error)]
pub enum PoseError {
    #[error("[binarize] crop {width}x{height} too small for gradient kernel")]
    TooSmall { width: usize, height: usize },
    #[error("[binarize] threshold block must be odd and >= 3, got {0}")]
    InvalidBlock(usize),
    #[error("[contours] no contour found in mask")]
    NoContour,
    #[error("[fit] degenerate line fit: {0}")]
    DegenerateFit(String),
    #[error("[endpoints] line meets contour at {found} distinct point(s), need 2")]
    Intersection { found: usize },
}

impl PoseError {
    /// Name of the pipeline stage that failed.
    pub fn stage(&self) -> &'static str {
        match self {
            Self::TooSmall { .. } | Self::InvalidBlock(_) => "binarize",
            Self::NoContour => "contours",
            Self::DegenerateFit(_) => "fit",
            Self::Intersection { .. } => "endpoints",
        }
    }
}
