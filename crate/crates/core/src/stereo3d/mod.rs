//! Pinhole lifting of image points through a disparity map, rigid mounting
//! into the rover frame, and elevation-map rasterization.
//!
//! Frames: the camera frame is x right, y down, z along the optical axis.
//! The world (rover) frame is `R * p_cam + t`; its x/y axes span the ground
//! plane and its z axis points down, so elevation is `-z`. With the default
//! identity mount this describes a downward-looking camera.

mod camera;
mod dem;
mod lift;

use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Scalar;

pub use camera::{intrinsics_from_hfov, CameraIntrinsics, MountPose, StereoRig, DEFAULT_BASELINE_M};
pub use dem::{build_dem, rasterize_max, Dem, DEFAULT_CELL_M};
pub use lift::{disparity_to_point, lift_pose_to_3d, project_point, sample_disparity, TubePose3D, SAMPLE_WINDOW};

#[derive(Debug, Error)]
pub enum StereoError {
    #[error("horizontal field of view must be in (0, 180) degrees, got {0}")]
    Hfov(f64),
    #[error("invalid disparity {0} (must be finite and > 0)")]
    InvalidDisparity(f64),
    #[error("no valid disparity within 5x5 of {name} at ({u:.1}, {v:.1})")]
    MissingDepth { name: &'static str, u: f64, v: f64 },
    #[error("disparity {dw}x{dh} does not match image {iw}x{ih}")]
    DimensionMismatch { dw: usize, dh: usize, iw: usize, ih: usize },
    #[error("rig config line {line}: {msg}")]
    Config { line: usize, msg: String },
    #[error("invalid rig: {0}")]
    InvalidRig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Scalar> Point3<T> {
    pub fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }

    pub fn norm(&self) -> T {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn distance(&self, other: Self) -> T {
        (*self - other).norm()
    }

    pub fn midpoint(&self, other: Self) -> Self {
        let h = T::lit(0.5);
        Self::new((self.x + other.x) * h, (self.y + other.y) * h, (self.z + other.z) * h)
    }

    pub fn to_array(&self) -> [T; 3] {
        [self.x, self.y, self.z]
    }
}

impl<T: Scalar> Add for Point3<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<T: Scalar> Sub for Point3<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}
