//! SSD post-processing: anchors over multi-resolution feature maps, box
//! decoding, score thresholding and per-class non-maximum suppression.

mod anchors;
mod decode;
mod nms;

pub use anchors::{generate_anchors, Anchor, AnchorConfig, FeatureMapAnchors};
pub use decode::{decode_box, decode_boxes, BoxCoder};
pub use nms::{nms, priority};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PostprocError {
    #[error("box regression has {actual} values, expected 4 x {anchors} anchors")]
    LengthMismatch { anchors: usize, actual: usize },
    #[error("scores have {actual} values, expected {anchors} anchors x {classes} classes")]
    ScoreLengthMismatch { anchors: usize, classes: usize, actual: usize },
    #[error("invalid anchor config: {0}")]
    InvalidAnchorConfig(String),
}

/// Axis-aligned box in corner form, `(ymin, xmin, ymax, xmax)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub ymin: f32,
    pub xmin: f32,
    pub ymax: f32,
    pub xmax: f32,
}

impl BBox {
    pub fn new(ymin: f32, xmin: f32, ymax: f32, xmax: f32) -> Self {
        Self { ymin, xmin, ymax, xmax }
    }

    pub fn area(&self) -> f64 {
        let h = (f64::from(self.ymax) - f64::from(self.ymin)).max(0.0);
        let w = (f64::from(self.xmax) - f64::from(self.xmin)).max(0.0);
        h * w
    }

    pub fn clip_unit(&self) -> Self {
        Self {
            ymin: self.ymin.clamp(0.0, 1.0),
            xmin: self.xmin.clamp(0.0, 1.0),
            ymax: self.ymax.clamp(0.0, 1.0),
            xmax: self.xmax.clamp(0.0, 1.0),
        }
    }

    /// Strictly positive extent in both axes.
    pub fn is_proper(&self) -> bool {
        self.ymin < self.ymax && self.xmin < self.xmax
    }

    /// Proper and inside the unit square.
    pub fn is_normalized(&self) -> bool {
        self.is_proper() && self.ymin >= 0.0 && self.xmin >= 0.0 && self.ymax <= 1.0 && self.xmax <= 1.0
    }
}

/// Intersection over union; 0 for disjoint or empty boxes.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let ih = (f64::from(a.ymax.min(b.ymax)) - f64::from(a.ymin.max(b.ymin))).max(0.0);
    let iw = (f64::from(a.xmax.min(b.xmax)) - f64::from(a.xmin.max(b.xmin))).max(0.0);
    let inter = ih * iw;
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).min(1.0)
    }
}

/// A scored box. `class_id` 0 is background and never emitted; detector
/// classes are numbered from 1. `anchor` is the originating anchor index,
/// used to break score ties deterministically.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BBox,
    pub class_id: u32,
    pub score: f32,
    pub anchor: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PostprocessConfig {
    pub score_threshold: f32,
    pub iou_threshold: f64,
    pub max_detections: usize,
}

impl PostprocessConfig {
    /// Thresholds for mAP evaluation.
    pub const EVAL: Self = Self {
        score_threshold: 0.01,
        iou_threshold: 0.6,
        max_detections: 100,
    };

    /// Thresholds for interactive inference.
    pub const INFER: Self = Self {
        score_threshold: 0.5,
        iou_threshold: 0.6,
        max_detections: 100,
    };
}

impl Default for PostprocessConfig {
    fn default() -> Self {
        Self::EVAL
    }
}

/// Thresholds per-anchor class scores, decodes and clips the surviving boxes,
/// and runs NMS. `scores` is anchor-major with `num_classes` entries per
/// anchor (class id `c + 1` at offset `c`).
pub fn detect(
    raw_boxes: &[f32],
    scores: &[f32],
    anchors: &[Anchor],
    coder: &BoxCoder,
    num_classes: usize,
    cfg: &PostprocessConfig,
) -> Result<Vec<Detection>, PostprocError> {
    if scores.len() != anchors.len() * num_classes {
        return Err(PostprocError::ScoreLengthMismatch {
            anchors: anchors.len(),
            classes: num_classes,
            actual: scores.len(),
        });
    }
    let boxes = decode_boxes(raw_boxes, anchors, coder)?;
    let mut candidates = Vec::new();
    for (a, (bbox, row)) in boxes.iter().zip(scores.chunks(num_classes)).enumerate() {
        if !bbox.is_proper() {
            continue;
        }
        for (c, &score) in row.iter().enumerate() {
            if score >= cfg.score_threshold {
                candidates.push(Detection {
                    bbox: *bbox,
                    class_id: c as u32 + 1,
                    score: score.clamp(0.0, 1.0),
                    anchor: a,
                });
            }
        }
    }
    Ok(nms(candidates, cfg.iou_threshold, cfg.max_detections))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn iou_examples() {
        let a = BBox::new(0.0, 0.0, 2.0, 2.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &BBox::new(5.0, 5.0, 6.0, 6.0)), 0.0);
        assert_eq!(iou(&a, &BBox::new(1.0, 1.0, 3.0, 3.0)), 1.0 / 7.0);
        let b = BBox::new(0.0, 0.0, 10.0, 10.0);
        let c = BBox::new(1.0, 1.0, 11.0, 11.0);
        assert!((iou(&b, &c) - 81.0 / 119.0).abs() < 1e-12);
    }

    #[test]
    fn touching_boxes_do_not_overlap() {
        let a = BBox::new(0.0, 0.0, 1.0, 1.0);
        let b = BBox::new(0.0, 1.0, 1.0, 2.0);
        assert_eq!(iou(&a, &b), 0.0);
    }

    fn arb_box() -> impl Strategy<Value = BBox> {
        (0f32..1.0, 0f32..1.0, 0.001f32..1.0, 0.001f32..1.0)
            .prop_map(|(y, x, h, w)| BBox::new(y, x, y + h, x + w))
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
            let ab = iou(&a, &b);
            prop_assert_eq!(ab, iou(&b, &a));
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(iou(&a, &a), 1.0);
        }
    }

    #[test]
    fn detect_thresholds_and_labels() {
        let cfg = AnchorConfig::single(2, 2, 0.5, &[1.0]);
        let anchors = generate_anchors(&cfg);
        let raw = vec![0.0; anchors.len() * 4];
        // 4 anchors x 2 classes
        let scores = vec![0.9, 0.1, 0.2, 0.7, 0.0, 0.0, 0.05, 0.6];
        let dets = detect(&raw, &scores, &anchors, &cfg.coder, 2, &PostprocessConfig::INFER).unwrap();
        assert_eq!(dets.len(), 3);
        assert_eq!((dets[0].class_id, dets[0].anchor, dets[0].score), (1, 0, 0.9));
        assert_eq!((dets[1].class_id, dets[1].anchor), (2, 1));
        assert_eq!((dets[2].class_id, dets[2].anchor), (2, 3));
        assert!(detect(&raw, &scores[1..], &anchors, &cfg.coder, 2, &PostprocessConfig::INFER).is_err());
    }
}
