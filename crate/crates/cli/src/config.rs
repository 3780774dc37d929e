//! Run configuration: built-in defaults, then the TOML file, then flags.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use tubeloc::nnexec::{CONF_THRESHOLD, NMS_IOU};
use tubeloc::posecv::{DEFAULT_BLOCK, DEFAULT_OFFSET};
use tubeloc::stereo3d::DEFAULT_CELL_M;

use crate::error::CliError;

/// Environment variable naming the default config file (read by the `--config` flag).
pub const CONFIG_ENV: &str = "TUBELOC_CONFIG";

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Darknet cfg; the built-in single-class YOLOv3-tiny when absent.
    pub cfg: Option<PathBuf>,
    pub weights: Option<PathBuf>,
    /// Quantization sidecar; selects the 8-bit path when present.
    pub calibration: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RigConfig {
    /// `key = value` rig file; the default LocCam-like rig when absent.
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub confidence: f32,
    pub nms_iou: f32,
    pub match_iou: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { confidence: CONF_THRESHOLD, nms_iou: NMS_IOU, match_iou: tubeloc::evalbench::MATCH_IOU }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoseConfig {
    pub block: usize,
    pub offset: i32,
}

impl Default for PoseConfig {
    fn default() -> Self {
        Self { block: DEFAULT_BLOCK, offset: DEFAULT_OFFSET }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Where report files, debug rasters and DEMs go.
    pub dir: Option<PathBuf>,
    pub debug: bool,
    pub dem_cell_m: f64,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: None, debug: false, dem_cell_m: DEFAULT_CELL_M }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    /// Worker threads for per-image work; all cores when absent.
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub rig: RigConfig,
    pub thresholds: Thresholds,
    pub pose: PoseConfig,
    pub output: OutputConfig,
    pub run: RunSection,
}

impl RunConfig {
    /// Parses TOML text; relative paths resolve against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, CliError> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| CliError::Data(format!("config: {}", e.message())))?;
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(path) = p.as_mut().filter(|p| p.is_relative()) {
                *path = base.join(&*path);
            }
        };
        fix(&mut cfg.model.cfg);
        fix(&mut cfg.model.weights);
        fix(&mut cfg.model.calibration);
        fix(&mut cfg.rig.path);
        fix(&mut cfg.output.dir);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base).map_err(|e| e.in_file(path))
    }

    /// Range checks on the tunables and existence of every referenced file.
    pub fn validate(&self) -> Result<(), CliError> {
        let t = &self.thresholds;
        if !(t.confidence.is_finite() && t.confidence >= 0.0) {
            return Err(CliError::Usage(format!("confidence threshold must be >= 0, got {}", t.confidence)));
        }
        if !(t.nms_iou > 0.0 && t.nms_iou <= 1.0) {
            return Err(CliError::Usage(format!("NMS IoU must be in (0, 1], got {}", t.nms_iou)));
        }
        if !(t.match_iou > 0.0 && t.match_iou <= 1.0) {
            return Err(CliError::Usage(format!("match IoU must be in (0, 1], got {}", t.match_iou)));
        }
        if self.pose.block < 3 || self.pose.block % 2 == 0 {
            return Err(CliError::Usage(format!("threshold block must be odd and >= 3, got {}", self.pose.block)));
        }
        if !(self.output.dem_cell_m > 0.0 && self.output.dem_cell_m.is_finite()) {
            return Err(CliError::Usage(format!("DEM cell size must be positive, got {}", self.output.dem_cell_m)));
        }
        if self.run.jobs == Some(0) {
            return Err(CliError::Usage("jobs must be at least 1".into()));
        }
        let files = [&self.model.cfg, &self.model.weights, &self.model.calibration, &self.rig.path];
        for path in files.into_iter().flatten() {
            if !path.is_file() {
                return Err(CliError::Data(format!("{}: file not found", path.display())));
            }
        }
        Ok(())
    }

    pub fn jobs(&self) -> usize {
        self.run.jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = RunConfig::from_toml("", Path::new("/x")).unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.thresholds.confidence, 0.75);
        assert_eq!((cfg.pose.block, cfg.pose.offset), (15, 5));
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn relative_paths_resolve_against_the_config_dir() {
        let text = "[model]\nweights = \"w/tiny.weights\"\ncfg = \"/abs/tiny.cfg\"\n[output]\ndir = \"out\"\n";
        let cfg = RunConfig::from_toml(text, Path::new("/etc/tubeloc")).unwrap();
        assert_eq!(cfg.model.weights.unwrap(), Path::new("/etc/tubeloc/w/tiny.weights"));
        assert_eq!(cfg.model.cfg.unwrap(), Path::new("/abs/tiny.cfg"));
        assert_eq!(cfg.output.dir.unwrap(), Path::new("/etc/tubeloc/out"));
    }

    #[test]
    fn unknown_keys_and_bad_ranges_are_rejected() {
        let err = RunConfig::from_toml("[thresholds]\nconfidense = 0.5\n", Path::new(".")).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let mut cfg = RunConfig::default();
        cfg.thresholds.nms_iou = 0.0;
        assert_eq!(cfg.validate().unwrap_err().exit_code(), 1);
        let mut cfg = RunConfig::default();
        cfg.pose.block = 14;
        assert_eq!(cfg.validate().unwrap_err().exit_code(), 1);
        let mut cfg = RunConfig::default();
        cfg.model.weights = Some("/nonexistent/w.weights".into());
        let err = cfg.validate().unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("/nonexistent/w.weights"));
    }
}
