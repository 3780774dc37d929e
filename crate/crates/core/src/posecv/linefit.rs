//! Total-least-squares axis fit.

use serde::{Deserialize, Serialize};

use crate::scalar::{fold_axial_deg, Scalar};

use super::PoseError;

/// Minor/major eigenvalue ratio above which a point cloud is reported as
/// too round to carry a reliable axis.
pub const LOW_ANISOTROPY_RATIO: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2<T> {
    pub x: T,
    pub y: T,
}

impl<T: Scalar> Point2<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: Self) -> T {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// An infinite line: unit direction plus an anchor point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit<T> {
    pub dx: T,
    pub dy: T,
    pub point: Point2<T>,
}

impl<T: Scalar> LineFit<T> {
    /// Normalizes `(dx, dy)` and flips it so `dx >= 0` (`dy >= 0` when `dx == 0`).
    pub fn new(dx: T, dy: T, point: Point2<T>) -> Self {
        let n = dx.hypot(dy);
        let (mut dx, mut dy) = (dx / n, dy / n);
        if dx < T::zero() || (dx == T::zero() && dy < T::zero()) {
            dx = -dx;
            dy = -dy;
        }
        // avoid -0.0 leaking into serialized output
        Self { dx: dx + T::zero(), dy: dy + T::zero(), point }
    }

    /// Axial angle of the direction in `[0, 180)` degrees, image axes.
    pub fn orientation_deg(&self) -> T {
        fold_axial_deg(self.dy.atan2(self.dx).to_degrees())
    }

    pub fn at(&self, t: T) -> Point2<T> {
        Point2::new(self.point.x + t * self.dx, self.point.y + t * self.dy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TlsFit<T> {
    pub line: LineFit<T>,
    /// Minor over major covariance eigenvalue, in `[0, 1]`.
    pub eigen_ratio: T,
    pub low_anisotropy: bool,
}

/// Principal axis of `points`, re-anchored at `anchor`.
pub fn fit_line_least_squares<T: Scalar>(points: &[Point2<T>], anchor: Point2<T>) -> Result<TlsFit<T>, PoseError> {
    if points.len() < 2 {
        return Err(PoseError::DegenerateFit(format!("{} point(s)", points.len())));
    }
    let n = T::from_usize_lossy(points.len());
    let mx = points.iter().map(|p| p.x).sum::<T>() / n;
    let my = points.iter().map(|p| p.y).sum::<T>() / n;
    let (mut sxx, mut sxy, mut syy) = (T::zero(), T::zero(), T::zero());
    for p in points {
        let (dx, dy) = (p.x - mx, p.y - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let half = T::lit(0.5);
    let mean = (sxx + syy) * half;
    let spread = ((sxx - syy) * half).hypot(sxy);
    let (major, minor) = (mean + spread, mean - spread);
    if major <= T::zero() {
        return Err(PoseError::DegenerateFit("all points coincide".into()));
    }
    // eigenvector of the major eigenvalue from whichever row of
    // (C - major*I) is better conditioned; exact for axis-aligned clouds
    let a = (sxy, major - sxx);
    let b = (major - syy, sxy);
    let (dx, dy) = if a.0.hypot(a.1) >= b.0.hypot(b.1) { a } else { b };
    // perfectly isotropic cloud: every direction is principal
    let (dx, dy) = if dx.hypot(dy) <= major * T::lit(1e-12) { (T::one(), T::zero()) } else { (dx, dy) };
    let ratio = (minor.max(T::zero()) / major).min(T::one());
    Ok(TlsFit {
        line: LineFit::new(dx, dy, anchor),
        eigen_ratio: ratio,
        low_anisotropy: ratio > T::lit(LOW_ANISOTROPY_RATIO),
    })
}
