use serde::Serialize;

use crate::imgcore::{crop, BoundingBox};
use crate::nnexec::{DetectOptions, Detection, Detector};
use crate::posecv::{estimate_pose_2d, Point2, PoseParams};

use super::{aggregate_orientation, match_detections, orientation_error, Dataset, DetectionMetrics, EvalError, ImageMatch, OrientationStats};

/// Outcome of a detection evaluation; images that failed are listed and
/// excluded from the counts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub model: String,
    pub conf_threshold: f32,
    pub match_iou: f64,
    pub metrics: DetectionMetrics,
    pub failures: Vec<(String, String)>,
}

impl EvalReport {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "model": self.model,
            "conf_threshold": self.conf_threshold,
            "match_iou": self.match_iou,
            "true_positives": self.metrics.true_positives,
            "false_negatives": self.metrics.false_negatives,
            "false_positives": self.metrics.false_positives,
            "recall": self.metrics.recall(),
            "images": self.metrics.images,
            "failures": self.failures.iter().map(|(i, e)| serde_json::json!({"image": i, "error": e})).collect::<Vec<_>>(),
        })
    }

    /// Confusion counts laid out as rows (TP / FN / FP) under a model column.
    pub fn to_table(&self) -> String {
        let w = self.model.len().max(8);
        let m = &self.metrics;
        let mut out = format!("{:<16}  {:>w$}\n", "", self.model);
        out.push_str(&format!("{:<16}  {:>w$}\n", "True Positives", m.true_positives));
        out.push_str(&format!("{:<16}  {:>w$}\n", "False Negatives", m.false_negatives));
        out.push_str(&format!("{:<16}  {:>w$}\n", "False Positives", m.false_positives));
        if !self.failures.is_empty() {
            out.push_str(&format!("({} image(s) failed)\n", self.failures.len()));
        }
        out
    }
}

/// Matches precomputed detections against pixel-space labels per image.
pub fn evaluate_detections(
    per_image: &[(String, Vec<Detection>, Vec<BoundingBox<f64>>)],
    conf_threshold: f32,
    match_iou: f64,
) -> DetectionMetrics {
    DetectionMetrics::from_images(
        per_image
            .iter()
            .map(|(name, dets, labels)| {
                let kept: Vec<Detection> = dets.iter().copied().filter(|d| d.confidence >= conf_threshold).collect();
                match_detections(name, &kept, labels, match_iou)
            })
            .collect(),
    )
}

/// Splits `0..n` over up to `jobs` scoped threads, preserving index order.
pub(crate) fn par_map<T: Send>(n: usize, jobs: usize, f: impl Fn(usize) -> T + Sync) -> Vec<T> {
    let jobs = jobs.clamp(1, n.max(1));
    if jobs == 1 {
        return (0..n).map(f).collect();
    }
    let chunk = n.div_ceil(jobs);
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..jobs)
            .map(|j| {
                let f = &f;
                s.spawn(move || (j * chunk..((j + 1) * chunk).min(n)).map(f).collect::<Vec<T>>())
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    })
}

/// Detects on every dataset image, matches against labels and aggregates.
/// Per-image failures are recorded and skipped.
pub fn run_eval(
    model_name: &str,
    detector: &dyn Detector,
    dataset: &Dataset,
    opts: &DetectOptions,
    match_iou: f64,
    jobs: usize,
) -> EvalReport {
    let results = par_map(dataset.entries.len(), jobs, |i| -> Result<ImageMatch, (String, String)> {
        let e = &dataset.entries[i];
        let fail = |err: EvalError| (e.stem.clone(), err.to_string());
        let image = e.load_image().map_err(fail)?;
        let dets = detector.detect(&image, opts).map_err(|err| fail(err.into()))?;
        let labels: Vec<_> = e.labels.iter().map(|l| l.to_box(image.width(), image.height())).collect();
        Ok(match_detections(&e.stem, &dets, &labels, match_iou))
    });
    let (mut ok, mut failures) = (Vec::new(), Vec::new());
    for r in results {
        match r {
            Ok(m) => ok.push(m),
            Err(f) => failures.push(f),
        }
    }
    EvalReport {
        model: model_name.to_string(),
        conf_threshold: opts.conf_threshold,
        match_iou,
        metrics: DetectionMetrics::from_images(ok),
        failures,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrientationReport {
    /// `None` when no instance produced an estimate.
    pub stats: Option<OrientationStats>,
    pub degraded: usize,
    pub failures: Vec<(String, String)>,
}

/// Runs the pose pipeline on every ground-truth box that carries an
/// orientation (from the label's extended columns or the `poses/` file, by
/// instance index) and compares against it. The detection centroid is the
/// annotated tube centroid when present, else the box centre.
pub fn evaluate_orientation(dataset: &Dataset, params: &PoseParams, jobs: usize) -> OrientationReport {
    type Sample = Result<(f64, bool), (String, String)>;
    let per_image = par_map(dataset.entries.len(), jobs, |i| -> Vec<Sample> {
        let e = &dataset.entries[i];
        let wanted: Vec<_> = e
            .labels
            .iter()
            .enumerate()
            .filter_map(|(k, l)| {
                let pose = e.poses.get(k);
                let gt = l.orientation_deg.or(pose.map(|p| p.orientation_deg))?;
                Some((k, l, gt, l.centroid.or(pose.and_then(|p| p.centroid))))
            })
            .collect();
        if wanted.is_empty() {
            return Vec::new();
        }
        let image = match e.load_image() {
            Ok(img) => img,
            Err(err) => return vec![Err((e.stem.clone(), err.to_string()))],
        };
        wanted
            .into_iter()
            .map(|(k, l, gt, centroid)| {
                let tag = |msg: String| (format!("{}#{k}", e.stem), msg);
                let b = l.to_box(image.width(), image.height());
                let c = crop(&image, &b).map_err(|err| tag(err.to_string()))?;
                let (cx, cy) = centroid.unwrap_or(b.center());
                let local = c.to_local(cx, cy);
                let pose = estimate_pose_2d(&c, Point2::new(local.0, local.1), params).map_err(|err| tag(err.to_string()))?;
                Ok((orientation_error(pose.orientation_deg, gt), pose.degraded))
            })
            .collect()
    });
    let (mut errors, mut degraded, mut failures) = (Vec::new(), 0, Vec::new());
    for s in per_image.into_iter().flatten() {
        match s {
            Ok((err, d)) => {
                errors.push(err);
                degraded += d as usize;
            }
            Err(f) => failures.push(f),
        }
    }
    OrientationReport { stats: aggregate_orientation(&errors).ok(), degraded, failures }
}
