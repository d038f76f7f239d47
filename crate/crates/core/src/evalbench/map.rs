//! COCO-style average precision at IoU = .50:.05:.95.
//!
//! Per class and threshold, each image's detections are matched greedily in
//! score order; a detection takes the unmatched ground truth of its class
//! with the highest IoU (ties to the lower index) provided IoU >= t. AP is
//! the mean of the interpolated precision at the 101 recall points
//! 0, 0.01, ..., 1. Classes with no ground truth are left out of the mean.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::postproc::{iou, BBox, Detection};

pub const NUM_THRESHOLDS: usize = 10;
const RECALL_POINTS: usize = 101;

/// `0.50, 0.55, ..., 0.95`, each computed as `(10 + i) / 20`.
pub fn iou_thresholds() -> [f64; NUM_THRESHOLDS] {
    std::array::from_fn(|i| (10 + i) as f64 / 20.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub bbox: BBox,
    pub class_id: u32,
}

/// Ground truth and detections of one image.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ImageResult {
    pub ground_truth: Vec<GroundTruth>,
    pub detections: Vec<Detection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAp {
    pub class_id: u32,
    pub ground_truth: usize,
    pub detections: usize,
    /// AP at each IoU threshold; `None` when the class has no ground truth.
    pub ap_per_threshold: Option<Vec<f64>>,
    pub ap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapResult {
    pub map: f64,
    pub per_class: Vec<ClassAp>,
    /// Mean over evaluated classes at each threshold.
    pub per_threshold: Vec<f64>,
}

fn by_score(a: &Detection, b: &Detection) -> Ordering {
    b.score.total_cmp(&a.score)
}

/// True-positive flag for each detection of `class_id` in `image`, in
/// descending score order (stable for ties), paired with its score.
fn match_image(image: &ImageResult, class_id: u32, t: f64) -> Vec<(f32, bool)> {
    let gts: Vec<&BBox> = image
        .ground_truth
        .iter()
        .filter(|g| g.class_id == class_id)
        .map(|g| &g.bbox)
        .collect();
    let mut dets: Vec<&Detection> = image.detections.iter().filter(|d| d.class_id == class_id).collect();
    dets.sort_by(|a, b| by_score(a, b));
    let mut taken = vec![false; gts.len()];
    dets.iter()
        .map(|d| {
            let mut best: Option<(usize, f64)> = None;
            for (g, gt) in gts.iter().enumerate() {
                if taken[g] {
                    continue;
                }
                let v = iou(&d.bbox, gt);
                if v >= t && best.is_none_or(|(_, b)| v > b) {
                    best = Some((g, v));
                }
            }
            if let Some((g, _)) = best {
                taken[g] = true;
            }
            (d.score, best.is_some())
        })
        .collect()
}

/// 101-point interpolated AP from score-ordered TP flags.
fn average_precision(flags: &[bool], num_gt: usize) -> f64 {
    let mut precision = Vec::with_capacity(flags.len());
    let mut recall = Vec::with_capacity(flags.len());
    let mut tp = 0usize;
    for (i, &is_tp) in flags.iter().enumerate() {
        tp += usize::from(is_tp);
        precision.push(tp as f64 / (i + 1) as f64);
        recall.push(tp as f64 / num_gt as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut sum = 0.0;
    for k in 0..RECALL_POINTS {
        let r = k as f64 / (RECALL_POINTS - 1) as f64;
        let i = recall.partition_point(|&x| x < r);
        if i < precision.len() {
            sum += precision[i];
        }
    }
    sum / RECALL_POINTS as f64
}

pub fn compute_map(images: &[ImageResult], num_classes: usize) -> MapResult {
    let thresholds = iou_thresholds();
    let mut per_class = Vec::with_capacity(num_classes);
    for class_id in 1..=num_classes as u32 {
        let num_gt = images
            .iter()
            .flat_map(|im| &im.ground_truth)
            .filter(|g| g.class_id == class_id)
            .count();
        let num_det = images
            .iter()
            .flat_map(|im| &im.detections)
            .filter(|d| d.class_id == class_id)
            .count();
        let ap_per_threshold = (num_gt > 0).then(|| {
            thresholds
                .iter()
                .map(|&t| {
                    let mut scored: Vec<(f32, bool)> =
                        images.iter().flat_map(|im| match_image(im, class_id, t)).collect();
                    // Stable: equal scores keep image order, then in-image order.
                    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
                    let flags: Vec<bool> = scored.into_iter().map(|(_, tp)| tp).collect();
                    average_precision(&flags, num_gt)
                })
                .collect::<Vec<f64>>()
        });
        let ap = ap_per_threshold
            .as_ref()
            .map(|v| v.iter().sum::<f64>() / NUM_THRESHOLDS as f64);
        per_class.push(ClassAp {
            class_id,
            ground_truth: num_gt,
            detections: num_det,
            ap_per_threshold,
            ap,
        });
    }
    let evaluated: Vec<&ClassAp> = per_class.iter().filter(|c| c.ap.is_some()).collect();
    let map = if evaluated.is_empty() {
        0.0
    } else {
        evaluated.iter().filter_map(|c| c.ap).sum::<f64>() / evaluated.len() as f64
    };
    let per_threshold = (0..NUM_THRESHOLDS)
        .map(|k| {
            if evaluated.is_empty() {
                0.0
            } else {
                evaluated
                    .iter()
                    .map(|c| c.ap_per_threshold.as_ref().expect("evaluated")[k])
                    .sum::<f64>()
                    / evaluated.len() as f64
            }
        })
        .collect();
    MapResult {
        map,
        per_class,
        per_threshold,
    }
}
