use serde::{Deserialize, Serialize};

use crate::Scalar;

use super::{Point3, StereoError};

pub const DEFAULT_BASELINE_M: f64 = 0.12;

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics<T> {
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
    pub width: usize,
    pub height: usize,
}

impl<T: Scalar> CameraIntrinsics<T> {
    pub fn validate(&self) -> Result<(), StereoError> {
        let inside = |c: T, n: usize| c >= T::zero() && c <= T::from_usize_lossy(n);
        if !(self.fx > T::zero() && self.fy > T::zero()) {
            return Err(StereoError::InvalidRig("focal lengths must be positive".into()));
        }
        if !(inside(self.cx, self.width) && inside(self.cy, self.height)) {
            return Err(StereoError::InvalidRig("principal point outside the image".into()));
        }
        Ok(())
    }
}

/// Square-pixel intrinsics from the horizontal field of view, principal point
/// at the image centre.
pub fn intrinsics_from_hfov<T: Scalar>(width: usize, height: usize, hfov_deg: T) -> Result<CameraIntrinsics<T>, StereoError> {
    if !(hfov_deg > T::zero() && hfov_deg < T::lit(180.0)) {
        return Err(StereoError::Hfov(hfov_deg.to_f64_lossy()));
    }
    let half_w = T::from_usize_lossy(width) * T::lit(0.5);
    let f = half_w / (hfov_deg.to_radians() * T::lit(0.5)).tan();
    Ok(CameraIntrinsics { fx: f, fy: f, cx: half_w, cy: T::from_usize_lossy(height) * T::lit(0.5), width, height })
}

/// Rigid camera-to-world transform `p_world = rotation * p_cam + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MountPose<T> {
    /// Row-major 3x3 rotation.
    pub rotation: [[T; 3]; 3],
    pub translation: [T; 3],
}

impl<T: Scalar> MountPose<T> {
    pub fn identity() -> Self {
        let (o, z) = (T::one(), T::zero());
        Self { rotation: [[o, z, z], [z, o, z], [z, z, o]], translation: [z; 3] }
    }

    /// `Rz(yaw) * Ry(pitch) * Rx(roll)`, angles in degrees.
    pub fn from_rpy_deg(roll: T, pitch: T, yaw: T, translation: [T; 3]) -> Self {
        let (sr, cr) = roll.to_radians().sin_cos();
        let (sp, cp) = pitch.to_radians().sin_cos();
        let (sy, cy) = yaw.to_radians().sin_cos();
        let rotation = [
            [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
            [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
            [-sp, cp * sr, cp * cr],
        ];
        Self { rotation, translation }
    }

    /// Frobenius norm of `RᵀR − I`.
    pub fn orthonormality_error(&self) -> T {
        let r = &self.rotation;
        let mut acc = T::zero();
        for i in 0..3 {
            for j in 0..3 {
                let dot: T = (0..3).map(|k| r[k][i] * r[k][j]).sum();
                let e = dot - if i == j { T::one() } else { T::zero() };
                acc += e * e;
            }
        }
        acc.sqrt()
    }

    pub fn apply(&self, p: Point3<T>) -> Point3<T> {
        let r = &self.rotation;
        let t = &self.translation;
        Point3::new(
            r[0][0] * p.x + r[0][1] * p.y + r[0][2] * p.z + t[0],
            r[1][0] * p.x + r[1][1] * p.y + r[1][2] * p.z + t[1],
            r[2][0] * p.x + r[2][1] * p.y + r[2][2] * p.z + t[2],
        )
    }

    /// Inverse transform (world to camera).
    pub fn apply_inverse(&self, p: Point3<T>) -> Point3<T> {
        let r = &self.rotation;
        let t = &self.translation;
        let q = Point3::new(p.x - t[0], p.y - t[1], p.z - t[2]);
        Point3::new(
            r[0][0] * q.x + r[1][0] * q.y + r[2][0] * q.z,
            r[0][1] * q.x + r[1][1] * q.y + r[2][1] * q.z,
            r[0][2] * q.x + r[1][2] * q.y + r[2][2] * q.z,
        )
    }
}

/// Intrinsics of the reference (left) camera, stereo baseline and mount.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StereoRig<T> {
    pub intrinsics: CameraIntrinsics<T>,
    pub baseline_m: T,
    pub mount: MountPose<T>,
    /// Physical tube length used for plausibility checks.
    pub tube_length_m: T,
}

impl<T: Scalar> StereoRig<T> {
    pub fn new(intrinsics: CameraIntrinsics<T>, baseline_m: T, mount: MountPose<T>) -> Result<Self, StereoError> {
        let rig = Self { intrinsics, baseline_m, mount, tube_length_m: T::lit(0.15) };
        rig.validate()?;
        Ok(rig)
    }

    pub fn validate(&self) -> Result<(), StereoError> {
        self.intrinsics.validate()?;
        if !(self.baseline_m > T::zero()) {
            return Err(StereoError::InvalidRig("baseline must be positive".into()));
        }
        if !(self.mount.orthonormality_error() < T::lit(1e-9)) {
            return Err(StereoError::InvalidRig("mount rotation is not orthonormal".into()));
        }
        Ok(())
    }

    /// Parses the `key = value` rig file. Recognized keys: `width`, `height`,
    /// `fx`, `fy`, `hfov_deg`, `cx`, `cy`, `baseline_m`, `tube_length_m`,
    /// `rotation` (nine numbers, row-major), `rotation_rpy_deg` (three),
    /// `translation` (three). `#` starts a comment.
    pub fn from_config_str(text: &str) -> Result<Self, StereoError> {
        let mut width = 1024usize;
        let mut height = 768usize;
        let mut scalars: std::collections::BTreeMap<String, T> = Default::default();
        let mut rotation: Option<[[T; 3]; 3]> = None;
        let mut rpy: Option<[T; 3]> = None;
        let mut translation = [T::zero(); 3];
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| StereoError::Config { line: i + 1, msg };
            let (key, value) = line.split_once('=').ok_or_else(|| err(format!("expected key = value, got {line:?}")))?;
            let key = key.trim();
            let nums = value
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<f64>().map(T::lit).map_err(|e| err(format!("{key}: {s:?}: {e}"))))
                .collect::<Result<Vec<T>, _>>()?;
            let want = |n: usize| {
                if nums.len() == n {
                    Ok(())
                } else {
                    Err(err(format!("{key} expects {n} value(s), got {}", nums.len())))
                }
            };
            match key {
                "width" | "height" => {
                    want(1)?;
                    let v = nums[0].to_f64_lossy();
                    if !(v >= 1.0 && v.fract() == 0.0) {
                        return Err(err(format!("{key} must be a positive integer")));
                    }
                    *(if key == "width" { &mut width } else { &mut height }) = v as usize;
                }
                "fx" | "fy" | "hfov_deg" | "cx" | "cy" | "baseline_m" | "tube_length_m" => {
                    want(1)?;
                    scalars.insert(key.to_string(), nums[0]);
                }
                "rotation" => {
                    want(9)?;
                    rotation = Some([[nums[0], nums[1], nums[2]], [nums[3], nums[4], nums[5]], [nums[6], nums[7], nums[8]]]);
                }
                "rotation_rpy_deg" => {
                    want(3)?;
                    rpy = Some([nums[0], nums[1], nums[2]]);
                }
                "translation" => {
                    want(3)?;
                    translation = [nums[0], nums[1], nums[2]];
                }
                other => return Err(err(format!("unknown key {other:?}"))),
            }
        }
        let mut intrinsics = match (scalars.get("fx"), scalars.get("hfov_deg")) {
            (Some(_), Some(_)) => return Err(StereoError::InvalidRig("give either fx or hfov_deg, not both".into())),
            (Some(&fx), None) => CameraIntrinsics {
                fx,
                fy: fx,
                cx: T::from_usize_lossy(width) * T::lit(0.5),
                cy: T::from_usize_lossy(height) * T::lit(0.5),
                width,
                height,
            },
            (None, hfov) => intrinsics_from_hfov(width, height, hfov.copied().unwrap_or(T::lit(66.0)))?,
        };
        if let Some(&fy) = scalars.get("fy") {
            intrinsics.fy = fy;
        }
        if let Some(&cx) = scalars.get("cx") {
            intrinsics.cx = cx;
        }
        if let Some(&cy) = scalars.get("cy") {
            intrinsics.cy = cy;
        }
        let mount = match (rotation, rpy) {
            (Some(_), Some(_)) => return Err(StereoError::InvalidRig("give either rotation or rotation_rpy_deg".into())),
            (Some(rotation), None) => MountPose { rotation, translation },
            (None, Some([r, p, y])) => MountPose::from_rpy_deg(r, p, y, translation),
            (None, None) => MountPose { translation, ..MountPose::identity() },
        };
        let mut rig = Self {
            intrinsics,
            baseline_m: scalars.get("baseline_m").copied().unwrap_or(T::lit(DEFAULT_BASELINE_M)),
            mount,
            tube_length_m: scalars.get("tube_length_m").copied().unwrap_or(T::lit(0.15)),
        };
        rig.validate()?;
        if !(rig.tube_length_m > T::zero()) {
            rig.tube_length_m = T::lit(0.15);
        }
        Ok(rig)
    }
}

impl<T: Scalar> Default for StereoRig<T> {
    /// 1024x768, 66° HFOV, 0.12 m baseline, identity mount.
    fn default() -> Self {
        Self {
            intrinsics: intrinsics_from_hfov(1024, 768, T::lit(66.0)).expect("valid default fov"),
            baseline_m: T::lit(DEFAULT_BASELINE_M),
            mount: MountPose::identity(),
            tube_length_m: T::lit(0.15),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hfov_focal_lengths() {
        let k = intrinsics_from_hfov(1024, 768, 66.0f64).unwrap();
        assert!((k.fx - 512.0 / 33f64.to_radians().tan()).abs() < 1e-12);
        assert!((k.fx - 788.4).abs() < 0.05);
        assert_eq!((k.cx, k.cy), (512.0, 384.0));
        let k = intrinsics_from_hfov(2, 2, 90.0f64).unwrap();
        assert!((k.fx - 1.0).abs() < 1e-15);
        assert!(intrinsics_from_hfov(2, 2, 180.0f64).is_err());
        assert!(intrinsics_from_hfov(2, 2, 0.0f64).is_err());
    }

    #[test]
    fn rpy_is_orthonormal_and_invertible() {
        let m = MountPose::from_rpy_deg(10.0f64, -35.0, 120.0, [0.1, 0.2, 0.3]);
        assert!(m.orthonormality_error() < 1e-12);
        let p = Point3::new(0.3, -1.2, 2.5);
        let q = m.apply_inverse(m.apply(p));
        assert!(q.distance(p) < 1e-12);
    }

    #[test]
    fn parses_config() {
        let rig = StereoRig::<f64>::from_config_str(
            "# LocCam\nwidth = 1024\nheight = 768\nfx = 800\ncy = 380 # tweaked\nbaseline_m = 0.1\nrotation = 1 0 0, 0 1 0, 0 0 1\ntranslation = 0 0 -0.5\n",
        )
        .unwrap();
        assert_eq!(rig.intrinsics.fx, 800.0);
        assert_eq!(rig.intrinsics.cx, 512.0);
        assert_eq!(rig.intrinsics.cy, 380.0);
        assert_eq!(rig.baseline_m, 0.1);
        assert_eq!(rig.mount.translation, [0.0, 0.0, -0.5]);
        let d = StereoRig::<f64>::from_config_str("").unwrap();
        assert_eq!(d, StereoRig::default());
    }

    #[test]
    fn config_errors() {
        let e = StereoRig::<f64>::from_config_str("fx = 1\nbogus = 3\n").unwrap_err();
        assert!(matches!(e, StereoError::Config { line: 2, .. }), "{e}");
        assert!(StereoRig::<f64>::from_config_str("rotation = 1 0 0 0 1 0 0 0 2").is_err());
        assert!(StereoRig::<f64>::from_config_str("baseline_m = -1").is_err());
        assert!(StereoRig::<f64>::from_config_str("translation = 1 2").is_err());
    }
}
