use serde::Serialize;

use crate::imgcore::BoundingBox;
use crate::nnexec::Detection;

/// Default IoU for a detection to count as a true positive.
pub const MATCH_IOU: f64 = 0.5;

/// Confusion counts for one image.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImageMatch {
    pub image: String,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    /// `(detection index, label index, iou)` per true positive.
    pub matches: Vec<(usize, usize, f64)>,
}

/// Greedy matching: detections in descending confidence each claim the
/// unmatched label of highest IoU, provided it reaches `iou_threshold`.
pub fn match_detections(image: &str, detections: &[Detection], labels: &[BoundingBox<f64>], iou_threshold: f64) -> ImageMatch {
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| detections[b].confidence.total_cmp(&detections[a].confidence).then(a.cmp(&b)));
    let mut taken = vec![false; labels.len()];
    let mut matches = Vec::new();
    for di in order {
        let db = detections[di].bbox.cast::<f64>();
        let best = labels
            .iter()
            .enumerate()
            .filter(|(li, _)| !taken[*li])
            .map(|(li, l)| (li, db.iou(l)))
            .filter(|&(_, iou)| iou >= iou_threshold)
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
        if let Some((li, iou)) = best {
            taken[li] = true;
            matches.push((di, li, iou));
        }
    }
    let tp = matches.len();
    ImageMatch {
        image: image.to_string(),
        true_positives: tp,
        false_positives: detections.len() - tp,
        false_negatives: labels.len() - tp,
        matches,
    }
}

/// Totals over a set of images.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct DetectionMetrics {
    pub true_positives: usize,
    pub false_negatives: usize,
    pub false_positives: usize,
    /// Sorted by image name, so totals and records are order-independent.
    pub images: Vec<ImageMatch>,
}

impl DetectionMetrics {
    pub fn from_images(mut images: Vec<ImageMatch>) -> Self {
        images.sort_by(|a, b| a.image.cmp(&b.image));
        Self {
            true_positives: images.iter().map(|m| m.true_positives).sum(),
            false_negatives: images.iter().map(|m| m.false_negatives).sum(),
            false_positives: images.iter().map(|m| m.false_positives).sum(),
            images,
        }
    }

    /// TP / (TP + FN); `None` without labels.
    pub fn recall(&self) -> Option<f64> {
        let n = self.true_positives + self.false_negatives;
        (n > 0).then(|| self.true_positives as f64 / n as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(x: f32, conf: f32) -> Detection {
        Detection { bbox: BoundingBox::new(x, 0.0, 10.0, 10.0), confidence: conf, class_id: 0 }
    }

    #[test]
    fn single_overlap() {
        let l = [BoundingBox::new(1.0, 0.0, 10.0, 10.0)];
        let m = match_detections("a", &[det(0.0, 0.9)], &l, 0.5);
        assert_eq!((m.true_positives, m.false_positives, m.false_negatives), (1, 0, 0));
        let m = match_detections("a", &[], &l, 0.5);
        assert_eq!(m.false_negatives, 1);
    }

    #[test]
    fn duplicate_detection_is_false_positive() {
        let l = [BoundingBox::new(0.0, 0.0, 10.0, 10.0)];
        // lower-confidence detection overlaps better but the higher one claims first
        let m = match_detections("a", &[det(0.5, 0.6), det(1.5, 0.9)], &l, 0.5);
        assert_eq!((m.true_positives, m.false_positives, m.false_negatives), (1, 1, 0));
        assert_eq!(m.matches[0].0, 1);
    }
}
