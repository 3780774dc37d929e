use serde::{Deserialize, Serialize};

use crate::imgcore::Crop;

use super::{
    binarize_stages, find_contours, fit_line_least_squares, select_tube_contour, Contour, LineFit, MaskStages,
    Point2, PoseError, Selection, DEFAULT_BLOCK, DEFAULT_OFFSET,
};

/// Tunables of the mask stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoseParams {
    pub block: usize,
    pub offset: i32,
}

impl Default for PoseParams {
    fn default() -> Self {
        Self { block: DEFAULT_BLOCK, offset: DEFAULT_OFFSET }
    }
}

/// Image-plane tube pose in full-image pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TubePoseImage {
    pub endpoints: [Point2<f64>; 2],
    /// Midpoint of the endpoints (on the fitted line).
    pub centroid: Point2<f64>,
    pub orientation_deg: f64,
    /// Selected contour did not enclose the detection centroid.
    pub degraded: bool,
    /// Enclosed region too round for a trustworthy axis.
    pub low_anisotropy: bool,
}

impl TubePoseImage {
    pub fn to_record(&self, image: &str) -> serde_json::Value {
        let p = |q: Point2<f64>| [q.x, q.y];
        serde_json::json!({
            "image": image,
            "endpoints_px": [p(self.endpoints[0]), p(self.endpoints[1])],
            "centroid_px": p(self.centroid),
            "orientation_deg": self.orientation_deg,
            "degraded": self.degraded,
        })
    }
}

const EPS: f64 = 1e-9;

fn cross(ax: f64, ay: f64, bx: f64, by: f64) -> f64 {
    ax * by - ay * bx
}

/// Intersects the (crop-local) `line` with every contour edge and keeps the
/// two extreme hits along the line; `offset` maps them to the full image.
pub fn endpoints_from_contour(
    contour: &Contour,
    line: &LineFit<f64>,
    offset: (f64, f64),
) -> Result<TubePoseImage, PoseError> {
    let c = line.point;
    let mut ts = Vec::new();
    for (p, q) in contour.segments() {
        let (px, py) = (p.0 as f64 - c.x, p.1 as f64 - c.y);
        let (ex, ey) = ((q.0 - p.0) as f64, (q.1 - p.1) as f64);
        let denom = cross(line.dx, line.dy, ex, ey);
        if denom.abs() > EPS {
            let s = cross(px, py, line.dx, line.dy) / denom;
            if (-EPS..=1.0 + EPS).contains(&s) {
                ts.push(cross(px, py, ex, ey) / denom);
            }
        } else if cross(px, py, line.dx, line.dy).abs() < EPS {
            // collinear edge: both ends lie on the line
            ts.push(px * line.dx + py * line.dy);
            ts.push((px + ex) * line.dx + (py + ey) * line.dy);
        }
    }
    let tmin = ts.iter().copied().fold(f64::INFINITY, f64::min);
    let tmax = ts.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if ts.is_empty() || tmax - tmin < EPS {
        let found = if ts.is_empty() { 0 } else { 1 };
        return Err(PoseError::Intersection { found });
    }
    let shift = |p: Point2<f64>| Point2::new(p.x + offset.0, p.y + offset.1);
    let (a, b) = (shift(line.at(tmin)), shift(line.at(tmax)));
    Ok(TubePoseImage {
        endpoints: [a, b],
        centroid: Point2::new((a.x + b.x) / 2.0, (a.y + b.y) / 2.0),
        orientation_deg: line.orientation_deg(),
        degraded: false,
        low_anisotropy: false,
    })
}

/// Every intermediate product of [`estimate_pose_2d`].
#[derive(Debug, Clone)]
pub struct PoseTrace {
    pub stages: MaskStages,
    pub contours: Vec<Contour>,
    pub selection: Option<Selection>,
    pub line: Option<LineFit<f64>>,
    pub result: Option<TubePoseImage>,
}

/// Mask -> contours -> selection -> axis fit -> endpoints. `centroid` is the
/// detection-box centre in crop coordinates.
pub fn estimate_pose_2d(crop: &Crop, centroid: Point2<f64>, params: &PoseParams) -> Result<TubePoseImage, PoseError> {
    let (trace, res) = estimate_pose_traced(crop, centroid, params)?;
    drop(trace);
    res
}

/// Like [`estimate_pose_2d`] but also returns the intermediates. The outer
/// error covers failures before any stage output exists.
pub fn estimate_pose_traced(
    crop: &Crop,
    centroid: Point2<f64>,
    params: &PoseParams,
) -> Result<(PoseTrace, Result<TubePoseImage, PoseError>), PoseError> {
    let stages = binarize_stages(&crop.image, params.block, params.offset)?;
    let contours = find_contours(&stages.mask);
    let mut trace = PoseTrace { stages, contours, selection: None, line: None, result: None };
    let res = (|| {
        let sel = select_tube_contour(&trace.contours, centroid)?;
        trace.selection = Some(sel);
        let contour = &trace.contours[sel.index];
        let pts: Vec<Point2<f64>> = contour.enclosed.iter().map(|&(x, y)| Point2::new(x as f64, y as f64)).collect();
        let fit = fit_line_least_squares(&pts, centroid)?;
        trace.line = Some(fit.line);
        let mut pose = endpoints_from_contour(contour, &fit.line, (crop.offset_x as f64, crop.offset_y as f64))?;
        pose.degraded = sel.degraded;
        pose.low_anisotropy = fit.low_anisotropy;
        Ok(pose)
    })();
    trace.result = res.as_ref().ok().copied();
    Ok((trace, res))
}
