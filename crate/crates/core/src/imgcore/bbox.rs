use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Axis-aligned box: top-left corner plus extent, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox<T> {
    pub x: T,
    pub y: T,
    pub w: T,
    pub h: T,
}

impl<T: Scalar> BoundingBox<T> {
    pub fn new(x: T, y: T, w: T, h: T) -> Self {
        Self { x, y, w, h }
    }

    pub fn from_center(cx: T, cy: T, w: T, h: T) -> Self {
        let two = T::lit(2.0);
        Self { x: cx - w / two, y: cy - h / two, w, h }
    }

    pub fn from_corners(x0: T, y0: T, x1: T, y1: T) -> Self {
        Self { x: x0, y: y0, w: x1 - x0, h: y1 - y0 }
    }

    #[inline]
    pub fn right(&self) -> T {
        self.x + self.w
    }

    #[inline]
    pub fn bottom(&self) -> T {
        self.y + self.h
    }

    pub fn center(&self) -> (T, T) {
        let two = T::lit(2.0);
        (self.x + self.w / two, self.y + self.h / two)
    }

    pub fn area(&self) -> T {
        self.w.max(T::zero()) * self.h.max(T::zero())
    }

    /// Overlap region, `None` when the boxes do not overlap with positive area.
    pub fn intersection(&self, other: &Self) -> Option<Self> {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = self.right().min(other.right());
        let y1 = self.bottom().min(other.bottom());
        (x1 > x0 && y1 > y0).then(|| Self::from_corners(x0, y0, x1, y1))
    }

    pub fn iou(&self, other: &Self) -> T {
        let inter = self.intersection(other).map_or(T::zero(), |b| b.area());
        let union = self.area() + other.area() - inter;
        if union <= T::zero() {
            T::zero()
        } else {
            inter / union
        }
    }

    /// Clips the box to `[0, width] x [0, height]`.
    pub fn clamp_to(&self, width: T, height: T) -> Self {
        let x0 = self.x.max(T::zero()).min(width);
        let y0 = self.y.max(T::zero()).min(height);
        let x1 = self.right().max(T::zero()).min(width);
        let y1 = self.bottom().max(T::zero()).min(height);
        Self::from_corners(x0, y0, x1, y1)
    }

    pub fn cast<U: Scalar>(&self) -> BoundingBox<U> {
        BoundingBox {
            x: U::lit(self.x.to_f64_lossy()),
            y: U::lit(self.y.to_f64_lossy()),
            w: U::lit(self.w.to_f64_lossy()),
            h: U::lit(self.h.to_f64_lossy()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iou_of_identical_and_disjoint() {
        let a = BoundingBox::new(0.0f64, 0.0, 10.0, 10.0);
        assert_eq!(a.iou(&a), 1.0);
        let b = BoundingBox::new(20.0, 20.0, 5.0, 5.0);
        assert_eq!(a.iou(&b), 0.0);
        let c = BoundingBox::new(5.0, 0.0, 10.0, 10.0);
        assert!((a.iou(&c) - 50.0 / 150.0).abs() < 1e-12);
    }

    #[test]
    fn touching_boxes_do_not_intersect() {
        let a = BoundingBox::new(0.0f32, 0.0, 1.0, 1.0);
        let b = BoundingBox::new(1.0f32, 0.0, 1.0, 1.0);
        assert!(a.intersection(&b).is_none());
    }
}
