use std::cmp::Ordering;

use super::{iou, Detection};

/// Score descending, then lower anchor index, then lower class id.
pub fn priority(a: &Detection, b: &Detection) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.anchor.cmp(&b.anchor))
        .then(a.class_id.cmp(&b.class_id))
}

/// Greedy per-class suppression. A detection is kept iff its IoU with every
/// already-kept detection of the same class is at most `iou_threshold`.
/// Output is in priority order and holds at most `max_out` detections.
pub fn nms(mut dets: Vec<Detection>, iou_threshold: f64, max_out: usize) -> Vec<Detection> {
    dets.sort_by(priority);
    let mut kept: Vec<Detection> = Vec::with_capacity(max_out.min(dets.len()));
    for d in dets {
        if kept.len() >= max_out {
            break;
        }
        let suppressed = kept
            .iter()
            .any(|k| k.class_id == d.class_id && iou(&k.bbox, &d.bbox) > iou_threshold);
        if !suppressed {
            kept.push(d);
        }
    }
    kept
}
