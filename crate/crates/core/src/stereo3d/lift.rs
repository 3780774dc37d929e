use serde::{Deserialize, Serialize};

use crate::imgcore::DisparityImage;
use crate::posecv::{Point2, TubePoseImage};
use crate::scalar::fold_axial_deg;
use crate::Scalar;

use super::{Point3, StereoError, StereoRig};

/// Side of the disparity neighbourhood whose median feeds each lifted point.
pub const SAMPLE_WINDOW: usize = 5;

/// Camera-frame point for pixel `(u, v)` at disparity `d`.
pub fn disparity_to_point<T: Scalar>(u: T, v: T, d: T, rig: &StereoRig<T>) -> Result<Point3<T>, StereoError> {
    if !(d > T::zero() && d.is_finite()) {
        return Err(StereoError::InvalidDisparity(d.to_f64_lossy()));
    }
    let k = &rig.intrinsics;
    let z = k.fx * rig.baseline_m / d;
    Ok(Point3::new((u - k.cx) * z / k.fx, (v - k.cy) * z / k.fy, z))
}

/// Inverse of [`disparity_to_point`]: `(u, v, d)` of a camera-frame point with `z > 0`.
pub fn project_point<T: Scalar>(p: Point3<T>, rig: &StereoRig<T>) -> (T, T, T) {
    let k = &rig.intrinsics;
    (k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy, k.fx * rig.baseline_m / p.z)
}

/// Median of the valid disparities in the window centred on the pixel
/// containing `(u, v)`; `None` if the window holds none.
pub fn sample_disparity(disparity: &DisparityImage, u: f64, v: f64) -> Option<f64> {
    let r = (SAMPLE_WINDOW / 2) as isize;
    let (cu, cv) = (u.floor() as isize, v.floor() as isize);
    let mut vals: Vec<f64> = Vec::with_capacity(SAMPLE_WINDOW * SAMPLE_WINDOW);
    for y in cv - r..=cv + r {
        for x in cu - r..=cu + r {
            if x < 0 || y < 0 || x as usize >= disparity.width() || y as usize >= disparity.height() {
                continue;
            }
            if let Some(d) = disparity.valid_at(x as usize, y as usize) {
                vals.push(d as f64);
            }
        }
    }
    if vals.is_empty() {
        return None;
    }
    vals.sort_by(|a, b| a.total_cmp(b));
    let n = vals.len();
    Some(if n % 2 == 1 { vals[n / 2] } else { (vals[n / 2 - 1] + vals[n / 2]) / 2.0 })
}

/// World-frame tube pose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TubePose3D<T> {
    pub endpoints: [Point3<T>; 2],
    pub centroid: Point3<T>,
    /// Ground-plane (world x/y) axial angle in `[0, 180)`.
    pub yaw_deg: T,
    pub length_m: T,
    /// Endpoint separation within [0.5x, 2x] of the rig's tube length.
    pub length_plausible: bool,
}

impl<T: Scalar> TubePose3D<T> {
    pub fn from_endpoints(a: Point3<T>, b: Point3<T>, centroid: Point3<T>, expected_length: T) -> Self {
        let d = b - a;
        let length = a.distance(b);
        Self {
            endpoints: [a, b],
            centroid,
            yaw_deg: fold_axial_deg(d.y.atan2(d.x).to_degrees()),
            length_m: length,
            length_plausible: length >= expected_length * T::lit(0.5) && length <= expected_length * T::lit(2.0),
        }
    }
}

fn lift_one(name: &'static str, p: Point2<f64>, disparity: &DisparityImage, rig: &StereoRig<f64>) -> Result<Point3<f64>, StereoError> {
    let d = sample_disparity(disparity, p.x, p.y).ok_or(StereoError::MissingDepth { name, u: p.x, v: p.y })?;
    Ok(rig.mount.apply(disparity_to_point(p.x, p.y, d, rig)?))
}

/// Lifts both endpoints and the centroid of an image-plane pose.
pub fn lift_pose_to_3d(
    pose: &TubePoseImage,
    disparity: &DisparityImage,
    rig: &StereoRig<f64>,
) -> Result<TubePose3D<f64>, StereoError> {
    let a = lift_one("endpoint 0", pose.endpoints[0], disparity, rig)?;
    let b = lift_one("endpoint 1", pose.endpoints[1], disparity, rig)?;
    let c = lift_one("centroid", pose.centroid, disparity, rig)?;
    Ok(TubePose3D::from_endpoints(a, b, c, rig.tube_length_m))
}
