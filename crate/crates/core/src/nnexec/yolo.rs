//! Decoding of YOLO head tensors and greedy non-maximum suppression.

use serde::{Deserialize, Serialize};

use crate::darknet::YoloConfig;
use crate::imgcore::{unletterbox_box, BoundingBox, LetterboxTransform};
use crate::scalar::{sigmoid, Scalar};

use super::Tensor;

/// Default IoU above which a lower-confidence box is suppressed.
pub const NMS_IOU: f32 = 0.45;
/// Default score threshold for a positive detection.
pub const CONF_THRESHOLD: f32 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    /// Box in original-image pixels.
    pub bbox: BoundingBox<f32>,
    pub confidence: f32,
    pub class_id: u32,
}

impl Detection {
    /// One line-oriented JSON record: `{image, class_id, confidence, box:[x,y,w,h]}`.
    pub fn to_record(&self, image: &str) -> serde_json::Value {
        serde_json::json!({
            "image": image,
            "class_id": self.class_id,
            "confidence": self.confidence,
            "box": [self.bbox.x, self.bbox.y, self.bbox.w, self.bbox.h],
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct YoloHeadConfig {
    /// Anchor sizes in network-input pixels.
    pub anchors: Vec<(f32, f32)>,
    pub mask: Vec<usize>,
    pub classes: usize,
    pub grid_w: usize,
    pub grid_h: usize,
    pub net_w: usize,
    pub net_h: usize,
}

impl YoloHeadConfig {
    pub fn new(cfg: &YoloConfig, grid_w: usize, grid_h: usize, net_w: usize, net_h: usize) -> Self {
        Self {
            anchors: cfg.anchors.clone(),
            mask: cfg.mask.clone(),
            classes: cfg.classes,
            grid_w,
            grid_h,
            net_w,
            net_h,
        }
    }

    pub fn channels(&self) -> usize {
        self.mask.len() * (5 + self.classes)
    }

    pub fn stride(&self) -> (f32, f32) {
        (self.net_w as f32 / self.grid_w as f32, self.net_h as f32 / self.grid_h as f32)
    }
}

/// Decodes every cell/anchor of `head` and keeps boxes scoring at least
/// `threshold`, mapped back to source-image pixels. Arithmetic runs in
/// double precision whatever the head's scalar type.
pub fn yolo_decode<T: Scalar>(
    head: &Tensor<T>,
    config: &YoloHeadConfig,
    transform: &LetterboxTransform,
    threshold: f32,
) -> Vec<Detection> {
    let s = head.shape();
    debug_assert_eq!(s.channels, config.channels());
    debug_assert_eq!((s.height, s.width), (config.grid_h, config.grid_w));
    let (stride_x, stride_y) = config.stride();
    let entries = 5 + config.classes;
    let mut out = Vec::new();
    for (a, &anchor_idx) in config.mask.iter().enumerate() {
        let (aw, ah) = config.anchors[anchor_idx];
        let base = a * entries;
        let at = |k: usize, i: usize, j: usize| head.get(base + k, i, j).to_f64_lossy();
        for i in 0..s.height {
            for j in 0..s.width {
                let objectness = sigmoid(at(4, i, j));
                let (class_id, class_prob) = (0..config.classes)
                    .map(|c| (c, sigmoid(at(5 + c, i, j))))
                    .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
                let confidence = objectness * class_prob;
                if confidence < threshold as f64 {
                    continue;
                }
                let bx = (sigmoid(at(0, i, j)) + j as f64) * stride_x as f64;
                let by = (sigmoid(at(1, i, j)) + i as f64) * stride_y as f64;
                let bw = aw as f64 * at(2, i, j).exp();
                let bh = ah as f64 * at(3, i, j).exp();
                let net_box = BoundingBox::from_center(bx, by, bw, bh);
                if let Ok(bbox) = unletterbox_box(&net_box, transform) {
                    out.push(Detection { bbox: bbox.cast(), confidence: (confidence as f32).clamp(0.0, 1.0), class_id: class_id as u32 });
                }
            }
        }
    }
    out
}

/// Greedy suppression in descending confidence order: a detection is
/// dropped when its IoU with an already-kept one exceeds `iou_threshold`.
pub fn nms(detections: &[Detection], iou_threshold: f32) -> Vec<Detection> {
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| detections[b].confidence.total_cmp(&detections[a].confidence));
    let mut kept: Vec<Detection> = Vec::new();
    for idx in order {
        let d = detections[idx];
        if kept.iter().all(|k| k.bbox.iou(&d.bbox) <= iou_threshold) {
            kept.push(d);
        }
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::darknet::Shape;

    fn det(x: f32, y: f32, w: f32, h: f32, c: f32) -> Detection {
        Detection { bbox: BoundingBox::new(x, y, w, h), confidence: c, class_id: 0 }
    }

    fn config(grid: usize) -> YoloHeadConfig {
        YoloHeadConfig {
            anchors: vec![(10.0, 14.0), (23.0, 27.0), (37.0, 58.0)],
            mask: vec![0, 1, 2],
            classes: 1,
            grid_w: grid,
            grid_h: grid,
            net_w: 416,
            net_h: 416,
        }
    }

    #[test]
    fn zero_logits_decode_to_anchor_at_cell_center() {
        let cfg = config(13);
        let head = Tensor::<f32>::zeros(Shape::new(18, 13, 13));
        let t = LetterboxTransform::identity(416, 416);
        let dets = yolo_decode(&head, &cfg, &t, 0.0);
        assert_eq!(dets.len(), 3 * 169);
        assert!(dets.iter().all(|d| d.confidence == 0.25));
        // first anchor, cell (1,1) avoids clipping at the border
        let d = dets.iter().find(|d| (d.bbox.center().0 - 48.0).abs() < 1e-4 && (d.bbox.center().1 - 48.0).abs() < 1e-4).unwrap();
        assert!((d.bbox.w - 10.0).abs() < 1e-5 && (d.bbox.h - 14.0).abs() < 1e-5);
        let corner = &dets[0];
        // cell (0,0): centre at half a stride, clipped at zero
        assert!((corner.bbox.right() - (16.0 + 5.0)).abs() < 1e-4);
        assert_eq!(corner.bbox.x, 11.0);
    }

    #[test]
    fn threshold_filters() {
        let head = Tensor::<f32>::zeros(Shape::new(18, 13, 13));
        let t = LetterboxTransform::identity(416, 416);
        assert!(yolo_decode(&head, &config(13), &t, 0.75).is_empty());
    }

    #[test]
    fn identical_boxes_keep_highest() {
        let kept = nms(&[det(0., 0., 10., 10., 0.8), det(0., 0., 10., 10., 0.9)], NMS_IOU);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].confidence, 0.9);
    }

    #[test]
    fn disjoint_boxes_survive() {
        let kept = nms(&[det(0., 0., 10., 10., 0.8), det(50., 50., 10., 10., 0.9)], NMS_IOU);
        assert_eq!(kept.len(), 2);
    }

    #[test]
    fn record_layout() {
        let r = det(1.0, 2.0, 3.0, 4.0, 0.5).to_record("a.pgm");
        assert_eq!(r["box"], serde_json::json!([1.0, 2.0, 3.0, 4.0]));
        assert_eq!(r["image"], "a.pgm");
        assert_eq!(r["class_id"], 0);
    }
}
