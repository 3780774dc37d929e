use crate::imgcore::{DisparityImage, INVALID_DISPARITY};
use crate::stereo3d::StereoRig;

use super::TubeSpec;

/// Disparity of the camera-frame plane `normal · p = offset`. Pixels whose
/// ray misses the plane (or hits it behind the camera) are invalid.
pub fn ground_plane_disparity(rig: &StereoRig<f64>, normal: [f64; 3], offset: f64) -> DisparityImage {
    let k = rig.intrinsics;
    DisparityImage::from_fn(k.width, k.height, |u, v| {
        let ray = [(u as f64 - k.cx) / k.fx, (v as f64 - k.cy) / k.fy, 1.0];
        let s = normal[0] * ray[0] + normal[1] * ray[1] + normal[2] * ray[2];
        let z = offset / s;
        if s.abs() < 1e-12 || !(z > 0.0) {
            INVALID_DISPARITY
        } else {
            (k.fx * rig.baseline_m / z) as f32
        }
    })
}

/// Disparity of flat ground at world height `z = ground_z` (world z points
/// down) seen through the rig's mount.
pub fn world_ground_disparity(rig: &StereoRig<f64>, ground_z: f64) -> DisparityImage {
    let r = rig.mount.rotation;
    ground_plane_disparity(rig, r[2], ground_z - rig.mount.translation[2])
}

/// Fronto-parallel ground at `ground_depth` with each tube's silhouette
/// raised to `top_depth` (identity-mount, downward-looking camera).
pub fn tube_on_ground_disparity(rig: &StereoRig<f64>, ground_depth: f64, tubes: &[(TubeSpec, f64)]) -> DisparityImage {
    let k = rig.intrinsics;
    let fb = k.fx * rig.baseline_m;
    DisparityImage::from_fn(k.width, k.height, |u, v| {
        let depth = tubes
            .iter()
            .filter(|(t, _)| t.contains(u as f64, v as f64))
            .map(|&(_, z)| z)
            .fold(ground_depth, f64::min);
        (fb / depth) as f32
    })
}
