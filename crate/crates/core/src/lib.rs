//! Sample-tube localization for rover stereo cameras.
//!
//! The pipeline runs a YOLOv3-tiny detector (float or 8-bit fixed-point) on
//! a grayscale frame, estimates the tube's image-plane axis inside the
//! detection with classical filtering and contour analysis, and lifts the
//! result to metric 3D with the pinhole model and a disparity map.

pub mod darknet;
pub mod evalbench;
pub mod imgcore;
pub mod nnexec;
pub mod posecv;
pub mod scalar;
pub mod stereo3d;
pub mod synth;

mod error;

pub use error::Error;
pub use scalar::Scalar;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Detection boxes live in single precision alongside network outputs.
pub type BoundingBox = imgcore::BoundingBox<f32>;
pub type Tensor = nnexec::Tensor<f32>;
pub type Network = nnexec::Network<f32>;
pub type Point2 = posecv::Point2<f64>;
pub type Point3 = stereo3d::Point3<f64>;
pub type LineFit = posecv::LineFit<f64>;
pub type CameraIntrinsics = stereo3d::CameraIntrinsics<f64>;
pub type StereoRig = stereo3d::StereoRig<f64>;
pub type TubePose3D = stereo3d::TubePose3D<f64>;
pub type Dem = stereo3d::Dem<f64>;
