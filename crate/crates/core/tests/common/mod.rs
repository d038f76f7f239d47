//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use maskedge::engine::TensorValue;
use maskedge::evalbench::{GroundTruth, ImageResult};
use maskedge::pipeline::{synthetic_scene, Detector};
use maskedge::postproc::{iou, BBox, Detection};
use maskedge::rng::XorShift64Star;
use maskedge::{Engine, ModelGraph, QTensor};

/// Keeps a detection iff no kept detection of the same class that ranks
/// above it overlaps it by more than `thr`. Ranking is found by counting,
/// for each detection, how many others beat it.
pub fn brute_force_nms(dets: &[Detection], thr: f64, max_out: usize) -> Vec<Detection> {
    let beats = |a: &Detection, b: &Detection| {
        a.score > b.score
            || (a.score == b.score && (a.anchor < b.anchor || (a.anchor == b.anchor && a.class_id < b.class_id)))
    };
    let n = dets.len();
    let mut order: Vec<(usize, usize)> = (0..n)
        .map(|i| ((0..n).filter(|&j| j != i && beats(&dets[j], &dets[i])).count(), i))
        .collect();
    order.sort();
    let mut kept: Vec<usize> = Vec::new();
    for &(_, i) in &order {
        let d = &dets[i];
        let blocked = kept
            .iter()
            .any(|&k| dets[k].class_id == d.class_id && iou(&dets[k].bbox, &d.bbox) > thr);
        if !blocked {
            kept.push(i);
        }
    }
    kept.into_iter().take(max_out).map(|i| dets[i]).collect()
}

/// Reference AP for one class at one threshold: greedy matching by a full
/// scan of the ground truth, then the interpolated precision at each recall
/// point taken as the maximum precision over every prefix reaching it.
fn reference_ap(images: &[ImageResult], class_id: u32, t: f64) -> Option<f64> {
    let num_gt: usize = images
        .iter()
        .map(|im| im.ground_truth.iter().filter(|g| g.class_id == class_id).count())
        .sum();
    if num_gt == 0 {
        return None;
    }
    let mut scored: Vec<(f32, usize, usize, bool)> = Vec::new();
    for (ii, im) in images.iter().enumerate() {
        let mut idx: Vec<usize> = (0..im.detections.len())
            .filter(|&k| im.detections[k].class_id == class_id)
            .collect();
        idx.sort_by(|&a, &b| im.detections[b].score.total_cmp(&im.detections[a].score).then(a.cmp(&b)));
        let mut used = vec![false; im.ground_truth.len()];
        for (rank, &k) in idx.iter().enumerate() {
            let d = &im.detections[k];
            let mut best: Option<usize> = None;
            for (g, gt) in im.ground_truth.iter().enumerate() {
                if gt.class_id != class_id || used[g] || iou(&d.bbox, &gt.bbox) < t {
                    continue;
                }
                if best.is_none_or(|b| iou(&d.bbox, &gt.bbox) > iou(&d.bbox, &im.ground_truth[b].bbox)) {
                    best = Some(g);
                }
            }
            if let Some(g) = best {
                used[g] = true;
            }
            scored.push((d.score, ii, rank, best.is_some()));
        }
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));
    let mut prefix = Vec::new();
    let mut tp = 0usize;
    for (k, s) in scored.iter().enumerate() {
        tp += usize::from(s.3);
        prefix.push((tp as f64 / num_gt as f64, tp as f64 / (k + 1) as f64));
    }
    let mut sum = 0.0;
    for r in 0..=100 {
        let r = r as f64 / 100.0;
        let p = prefix
            .iter()
            .filter(|(rec, _)| *rec >= r)
            .map(|(_, p)| *p)
            .fold(0.0, f64::max);
        sum += p;
    }
    Some(sum / 101.0)
}

pub fn reference_map(images: &[ImageResult], num_classes: usize) -> f64 {
    let thresholds: Vec<f64> = (0..10).map(|i| (10 + i) as f64 / 20.0).collect();
    let per_class: Vec<f64> = (1..=num_classes as u32)
        .filter_map(|c| {
            let aps: Option<Vec<f64>> = thresholds.iter().map(|&t| reference_ap(images, c, t)).collect();
            aps.map(|v| v.iter().sum::<f64>() / 10.0)
        })
        .collect();
    if per_class.is_empty() {
        0.0
    } else {
        per_class.iter().sum::<f64>() / per_class.len() as f64
    }
}

pub fn random_box(rng: &mut XorShift64Star) -> BBox {
    let y = rng.uniform(0.0, 0.8);
    let x = rng.uniform(0.0, 0.8);
    let h = rng.uniform(0.02, 0.2_f32.max(1.0 - y).min(0.6));
    let w = rng.uniform(0.02, 0.2_f32.max(1.0 - x).min(0.6));
    BBox::new(y, x, (y + h).min(1.0), (x + w).min(1.0))
}

/// Detections clustered around a few centres so suppression is exercised.
/// Scores come from a small set, so ties are common.
pub fn random_detections(rng: &mut XorShift64Star, n: usize, classes: u32) -> Vec<Detection> {
    let centres: Vec<BBox> = (0..4).map(|_| random_box(rng)).collect();
    (0..n)
        .map(|i| {
            let c = centres[rng.below(centres.len() as u64) as usize];
            let j = |rng: &mut XorShift64Star| rng.uniform(-0.03, 0.03);
            let b = BBox::new(c.ymin + j(rng), c.xmin + j(rng), c.ymax + j(rng), c.xmax + j(rng)).clip_unit();
            Detection {
                bbox: if b.is_proper() { b } else { c },
                class_id: 1 + rng.below(u64::from(classes)) as u32,
                score: (1 + rng.below(20)) as f32 / 20.0,
                anchor: i,
            }
        })
        .collect()
}

/// Up to 5 GT and 5 predictions per image, distinct scores.
pub fn random_eval_instance(rng: &mut XorShift64Star, images: usize) -> Vec<ImageResult> {
    let mut next_score = 0u32;
    (0..images)
        .map(|_| {
            let ground_truth: Vec<GroundTruth> = (0..rng.below(6))
                .map(|_| GroundTruth {
                    bbox: random_box(rng),
                    class_id: 1 + rng.below(2) as u32,
                })
                .collect();
            let detections = (0..rng.below(6))
                .map(|i| {
                    next_score += 1 + rng.below(3) as u32;
                    let bbox = if !ground_truth.is_empty() && rng.below(3) > 0 {
                        let g = ground_truth[rng.below(ground_truth.len() as u64) as usize].bbox;
                        let j = |rng: &mut XorShift64Star| rng.uniform(-0.04, 0.04);
                        let b = BBox::new(g.ymin + j(rng), g.xmin + j(rng), g.ymax + j(rng), g.xmax + j(rng)).clip_unit();
                        if b.is_proper() { b } else { g }
                    } else {
                        random_box(rng)
                    };
                    Detection {
                        bbox,
                        class_id: 1 + rng.below(2) as u32,
                        score: 1.0 / (1.0 + next_score as f32 * 0.01),
                        anchor: i as usize,
                    }
                })
                .collect();
            ImageResult {
                ground_truth,
                detections,
            }
        })
        .collect()
}

pub fn fnv1a(bytes: impl IntoIterator<Item = u8>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Raw u8 head outputs (box then class, per feature map) of a quantized
/// detector on seeded synthetic scenes, concatenated.
pub fn quantized_head_bytes(graph: &ModelGraph, seeds: std::ops::Range<u64>) -> Vec<u8> {
    let engine = Engine::new(graph.clone()).unwrap();
    let qp = graph.input_qparams().unwrap();
    let mut out = Vec::new();
    for s in seeds {
        let img = synthetic_scene(s, 48, 48).image;
        let x: QTensor = maskedge::pipeline::preprocess_quant(&img, graph.input_size(), qp).unwrap();
        let acts = engine.run(TensorValue::U8(x)).unwrap();
        for (&b, &c) in graph.box_outputs().iter().zip(graph.class_outputs()) {
            out.extend_from_slice(acts.get(b).unwrap().as_u8().unwrap().data());
            out.extend_from_slice(acts.get(c).unwrap().as_u8().unwrap().data());
        }
    }
    out
}

pub fn top1(detector: &Detector, img: &maskedge::Image) -> Option<Detection> {
    let cfg = maskedge::postproc::PostprocessConfig {
        score_threshold: 0.0,
        ..maskedge::postproc::PostprocessConfig::EVAL
    };
    detector.detect(img, &cfg).unwrap().into_iter().next()
}
