use crate::imgcore::{DisparityImage, GrayImage};
use crate::Scalar;

use super::{disparity_to_point, StereoError, StereoRig};

pub const DEFAULT_CELL_M: f64 = 0.02;

/// Ground-plane grid of maximum surface heights.
#[derive(Debug, Clone, PartialEq)]
pub struct Dem<T> {
    /// World x/y of the lower corner of cell (0, 0).
    pub origin: (T, T),
    pub cell: T,
    pub cols: usize,
    pub rows: usize,
    /// Row-major (row = y index) elevations; `None` for cells without points.
    pub cells: Vec<Option<T>>,
}

impl<T: Scalar> Dem<T> {
    pub fn get(&self, col: usize, row: usize) -> Option<T> {
        self.cells[row * self.cols + col]
    }

    pub fn filled(&self) -> impl Iterator<Item = T> + '_ {
        self.cells.iter().filter_map(|c| *c)
    }

    pub fn is_empty(&self) -> bool {
        self.cells.iter().all(Option::is_none)
    }

    /// Elevation range over non-empty cells.
    pub fn range(&self) -> Option<(T, T)> {
        self.filled().fold(None, |acc, v| match acc {
            None => Some((v, v)),
            Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
        })
    }

    /// Empty cells become 0, elevations map linearly onto 1..=255. Returns
    /// the image and the `(min, max)` used for scaling.
    pub fn to_pgm(&self) -> (GrayImage, (T, T)) {
        let (lo, hi) = self.range().unwrap_or((T::zero(), T::zero()));
        let span = hi - lo;
        let img = GrayImage::from_fn(self.cols, self.rows, |c, r| match self.get(c, r) {
            None => 0,
            Some(v) if span > T::zero() => 1 + ((v - lo) / span * T::lit(254.0)).round().to_f64_lossy() as u8,
            Some(_) => 255,
        });
        (img, (lo, hi))
    }

    /// Sidecar text accompanying [`Dem::to_pgm`].
    pub fn pgm_sidecar(&self) -> String {
        let (_, (lo, hi)) = self.to_pgm();
        format!(
            "min {lo}\nmax {hi}\ncell {}\norigin_x {}\norigin_y {}\n",
            self.cell, self.origin.0, self.origin.1
        )
    }

    /// `x,y,elevation` per non-empty cell centre.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,elevation\n");
        let half = T::lit(0.5);
        for r in 0..self.rows {
            for c in 0..self.cols {
                if let Some(v) = self.get(c, r) {
                    let x = self.origin.0 + (T::from_usize_lossy(c) + half) * self.cell;
                    let y = self.origin.1 + (T::from_usize_lossy(r) + half) * self.cell;
                    out.push_str(&format!("{x},{y},{v}\n"));
                }
            }
        }
        out
    }
}

/// Lifts every valid disparity pixel to the world frame and keeps the highest
/// point (`-z`) per `cell`-sized ground square. The grid spans the lifted
/// points' x/y extent.
pub fn build_dem(
    disparity: &DisparityImage,
    image: &GrayImage,
    rig: &StereoRig<f64>,
    cell: f64,
) -> Result<Dem<f64>, StereoError> {
    if (disparity.width(), disparity.height()) != (image.width(), image.height()) {
        return Err(StereoError::DimensionMismatch {
            dw: disparity.width(),
            dh: disparity.height(),
            iw: image.width(),
            ih: image.height(),
        });
    }
    if !(cell > 0.0 && cell.is_finite()) {
        return Err(StereoError::InvalidRig(format!("DEM cell size must be positive, got {cell}")));
    }
    let mut points = Vec::new();
    for v in 0..disparity.height() {
        for u in 0..disparity.width() {
            if let Some(d) = disparity.valid_at(u, v) {
                let p = disparity_to_point(u as f64, v as f64, d as f64, rig)?;
                let w = rig.mount.apply(p);
                points.push((w.x, w.y, -w.z));
            }
        }
    }
    Ok(rasterize_max(&points, cell))
}

/// Per-cell maximum of `(x, y, height)` samples.
pub fn rasterize_max<T: Scalar>(points: &[(T, T, T)], cell: T) -> Dem<T> {
    if points.is_empty() {
        return Dem { origin: (T::zero(), T::zero()), cell, cols: 1, rows: 1, cells: vec![None] };
    }
    let (mut x0, mut y0) = (T::infinity(), T::infinity());
    let (mut x1, mut y1) = (T::neg_infinity(), T::neg_infinity());
    for &(x, y, _) in points {
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    let index = |v: T, lo: T| ((v - lo) / cell).floor().to_f64_lossy() as usize;
    let cols = index(x1, x0) + 1;
    let rows = index(y1, y0) + 1;
    let mut cells: Vec<Option<T>> = vec![None; cols * rows];
    for &(x, y, h) in points {
        let slot = &mut cells[index(y, y0) * cols + index(x, x0)];
        *slot = Some(slot.map_or(h, |v| v.max(h)));
    }
    Dem { origin: (x0, y0), cell, cols, rows, cells }
}
