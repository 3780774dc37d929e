//! Dataset layout: `images/*.pgm`, `labels/<stem>.txt` (normalized YOLO
//! lines), optional `disparity/<stem>.pfm` and `poses/<stem>.txt`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::imgcore::{load_pgm, BoundingBox, GrayImage};

use super::EvalError;

/// One annotated instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthLabel {
    pub class_id: u32,
    /// Box centre and size as fractions of the image dimensions.
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
    pub orientation_deg: Option<f64>,
    /// Tube centroid in pixels.
    pub centroid: Option<(f64, f64)>,
}

impl GroundTruthLabel {
    /// Box in pixels of a `width`x`height` image.
    pub fn to_box(&self, width: usize, height: usize) -> BoundingBox<f64> {
        let (w, h) = (width as f64, height as f64);
        BoundingBox::from_center(self.cx * w, self.cy * h, self.w * w, self.h * h)
    }
}

/// `class cx cy w h [orientation_deg [centroid_x centroid_y]]` per line;
/// blank lines and `#` comments are ignored.
pub fn parse_label_file(text: &str, path: &Path) -> Result<Vec<GroundTruthLabel>, EvalError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| EvalError::Label { path: path.to_path_buf(), line: i + 1, msg };
        let tok: Vec<&str> = line.split_whitespace().collect();
        if !matches!(tok.len(), 5 | 6 | 8) {
            return Err(err(format!("expected 5, 6 or 8 columns, got {}", tok.len())));
        }
        let class_id: u32 = tok[0].parse().map_err(|_| err(format!("bad class id {:?}", tok[0])))?;
        let nums = tok[1..]
            .iter()
            .map(|s| s.parse::<f64>().map_err(|_| err(format!("bad number {s:?}"))))
            .collect::<Result<Vec<_>, _>>()?;
        for (name, &v) in ["cx", "cy", "w", "h"].iter().zip(&nums) {
            if !(0.0..=1.0).contains(&v) {
                return Err(err(format!("{name}={v} outside [0, 1]")));
            }
        }
        if !(nums[2] > 0.0 && nums[3] > 0.0) {
            return Err(err("box area must be positive".into()));
        }
        let orientation_deg = nums.get(4).copied();
        if let Some(o) = orientation_deg {
            if !(0.0..180.0).contains(&o) {
                return Err(err(format!("orientation {o} outside [0, 180)")));
            }
        }
        let centroid = (nums.len() == 7).then(|| (nums[5], nums[6]));
        out.push(GroundTruthLabel { class_id, cx: nums[0], cy: nums[1], w: nums[2], h: nums[3], orientation_deg, centroid });
    }
    Ok(out)
}

/// Ground-truth pose of one instance: `orientation_deg [centroid_x centroid_y]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseLabel {
    pub orientation_deg: f64,
    pub centroid: Option<(f64, f64)>,
}

pub fn parse_pose_file(text: &str, path: &Path) -> Result<Vec<PoseLabel>, EvalError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| EvalError::Label { path: path.to_path_buf(), line: i + 1, msg };
        let nums = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>().map_err(|_| err(format!("bad number {s:?}"))))
            .collect::<Result<Vec<_>, _>>()?;
        let orientation_deg = match nums.as_slice() {
            [o] | [o, _, _] => *o,
            _ => return Err(err(format!("expected 1 or 3 values, got {}", nums.len()))),
        };
        if !(0.0..180.0).contains(&orientation_deg) {
            return Err(err(format!("orientation {orientation_deg} outside [0, 180)")));
        }
        out.push(PoseLabel { orientation_deg, centroid: (nums.len() == 3).then(|| (nums[1], nums[2])) });
    }
    Ok(out)
}

fn read_text(path: &Path) -> Result<String, EvalError> {
    std::fs::read_to_string(path).map_err(|source| EvalError::Io { path: path.to_path_buf(), source })
}

fn files_with_ext(dir: &Path, ext: &str) -> Result<Vec<PathBuf>, EvalError> {
    let rd = std::fs::read_dir(dir).map_err(|source| EvalError::Io { path: dir.to_path_buf(), source })?;
    let mut out = Vec::new();
    for e in rd {
        let p = e.map_err(|source| EvalError::Io { path: dir.to_path_buf(), source })?.path();
        if p.extension().is_some_and(|x| x.eq_ignore_ascii_case(ext)) {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Every `*.txt` label file in `dir`, keyed by file stem.
pub fn load_labels(dir: &Path) -> Result<BTreeMap<String, Vec<GroundTruthLabel>>, EvalError> {
    files_with_ext(dir, "txt")?
        .into_iter()
        .map(|p| Ok((stem(&p), parse_label_file(&read_text(&p)?, &p)?)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetEntry {
    pub stem: String,
    pub image: PathBuf,
    /// Empty when the image has no label file.
    pub labels: Vec<GroundTruthLabel>,
    pub disparity: Option<PathBuf>,
    pub poses: Vec<PoseLabel>,
}

impl DatasetEntry {
    pub fn load_image(&self) -> Result<GrayImage, EvalError> {
        Ok(load_pgm(&self.image)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub root: PathBuf,
    /// Sorted by stem.
    pub entries: Vec<DatasetEntry>,
}

impl Dataset {
    pub fn load(root: &Path) -> Result<Self, EvalError> {
        let images = match files_with_ext(&root.join("images"), "pgm") {
            Ok(v) => v,
            Err(EvalError::Io { .. }) if !root.join("images").exists() => Vec::new(),
            Err(e) => return Err(e),
        };
        if images.is_empty() {
            return Err(EvalError::EmptyDataset(root.to_path_buf()));
        }
        let label_dir = root.join("labels");
        let labels = if label_dir.is_dir() { load_labels(&label_dir)? } else { BTreeMap::new() };
        let mut entries = Vec::with_capacity(images.len());
        for image in images {
            let s = stem(&image);
            let disparity = Some(root.join("disparity").join(format!("{s}.pfm"))).filter(|p| p.is_file());
            let pose_path = root.join("poses").join(format!("{s}.txt"));
            let poses = if pose_path.is_file() { parse_pose_file(&read_text(&pose_path)?, &pose_path)? } else { Vec::new() };
            entries.push(DatasetEntry { labels: labels.get(&s).cloned().unwrap_or_default(), stem: s, image, disparity, poses });
        }
        Ok(Self { root: root.to_path_buf(), entries })
    }

    pub fn label_count(&self) -> usize {
        self.entries.iter().map(|e| e.labels.len()).sum()
    }
}
