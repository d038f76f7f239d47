//! Accuracy (COCO mAP) and latency measurement over a dataset manifest.
//!
//! Evaluation runs images in parallel under a [`Jobs`] policy; results are
//! gathered in manifest order, so the report does not depend on it.
//! Benchmarking is always sequential on the calling thread. Its timing
//! boundary covers preprocessing, the network(s) and post-processing, but
//! not reading or decoding image files.

mod manifest;
mod map;

pub use manifest::{load_manifest, parse_manifest, DatasetManifest, GtBox, ManifestEntry, Split};
pub use map::{compute_map, iou_thresholds, ClassAp, GroundTruth, ImageResult, MapResult, NUM_THRESHOLDS};

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par::{self, Jobs};
use crate::pipeline::{Image, Pipeline, PipelineError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("manifest line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("manifest entry {entry}: unknown label {label:?} (expected \"mask\" or \"nomask\")")]
    UnknownLabel { entry: usize, label: String },
    #[error("manifest entry {entry} ({image}): invalid box {detail}")]
    InvalidBox { entry: usize, image: String, detail: String },
    #[error("manifest entry {entry}: duplicate image path {image}")]
    DuplicateImage { entry: usize, image: String },
    #[error("manifest has no entries")]
    EmptyManifest,
    #[error("benchmark needs at least one run")]
    NoRuns,
    #[error("no image could be read")]
    NoReadableImages,
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedImage {
    pub image: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: String,
    pub data_type: String,
    pub map: f64,
    pub iou_thresholds: Vec<f64>,
    pub per_threshold_ap: Vec<f64>,
    pub per_class: Vec<ClassReport>,
    pub images: usize,
    pub detections: usize,
    pub ground_truth: usize,
    pub skipped: Vec<SkippedImage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub label: String,
    pub ap: Option<f64>,
    pub ap_per_threshold: Option<Vec<f64>>,
    pub ground_truth: usize,
    pub detections: usize,
}

fn data_type(p: &Pipeline) -> &'static str {
    if p.is_quantized() {
        "8-bit"
    } else {
        "float"
    }
}

/// Scores already-run results.
pub fn report_from_results(pipeline: &Pipeline, results: &[ImageResult], skipped: Vec<SkippedImage>) -> EvalReport {
    let names = pipeline.class_names();
    let m = compute_map(results, names.len());
    EvalReport {
        mode: pipeline.mode().to_string(),
        data_type: data_type(pipeline).into(),
        map: m.map,
        iou_thresholds: iou_thresholds().to_vec(),
        per_threshold_ap: m.per_threshold,
        per_class: m
            .per_class
            .into_iter()
            .map(|c| ClassReport {
                label: names[c.class_id as usize - 1].clone(),
                ap: c.ap,
                ap_per_threshold: c.ap_per_threshold,
                ground_truth: c.ground_truth,
                detections: c.detections,
            })
            .collect(),
        images: results.len(),
        detections: results.iter().map(|r| r.detections.len()).sum(),
        ground_truth: results.iter().map(|r| r.ground_truth.len()).sum(),
        skipped,
    }
}

/// Runs `pipeline` on in-memory images paired with their ground truth.
pub fn evaluate_images(
    pipeline: &Pipeline,
    images: &[(Image, Vec<GroundTruth>)],
    jobs: Jobs,
) -> Result<EvalReport, EvalError> {
    if images.is_empty() {
        return Err(EvalError::EmptyManifest);
    }
    let results = par::map(jobs, images, |(img, gt)| {
        pipeline.run(img).map(|detections| ImageResult {
            ground_truth: gt.clone(),
            detections,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    Ok(report_from_results(pipeline, &results, Vec::new()))
}

/// Evaluates every manifest entry. Unreadable images are logged, listed in
/// [`EvalReport::skipped`] and left out of the metric.
pub fn evaluate(pipeline: &Pipeline, manifest: &DatasetManifest, jobs: Jobs) -> Result<EvalReport, EvalError> {
    if manifest.entries.is_empty() {
        return Err(EvalError::EmptyManifest);
    }
    let outcomes = par::map(jobs, &manifest.entries, |e| -> Result<Result<ImageResult, SkippedImage>, EvalError> {
        let img = match Image::load(&e.image) {
            Ok(img) => img,
            Err(err) => {
                return Ok(Err(SkippedImage {
                    image: e.image.display().to_string(),
                    reason: err.to_string(),
                }))
            }
        };
        Ok(Ok(ImageResult {
            ground_truth: e.boxes.iter().map(GtBox::ground_truth).collect(),
            detections: pipeline.run(&img)?,
        }))
    });
    let mut results = Vec::new();
    let mut skipped = Vec::new();
    for o in outcomes {
        match o? {
            Ok(r) => results.push(r),
            Err(s) => {
                log::warn!("skipping {}: {}", s.image, s.reason);
                skipped.push(s);
            }
        }
    }
    if results.is_empty() {
        return Err(EvalError::NoReadableImages);
    }
    Ok(report_from_results(pipeline, &results, skipped))
}

/// Mean per-image time of each stage, in milliseconds, over all runs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageBreakdown {
    pub preprocess_ms: f64,
    pub detector_ms: f64,
    pub classifier_ms: f64,
    pub postprocess_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub mode: String,
    pub data_type: String,
    pub runs: usize,
    pub images: usize,
    /// Mean milliseconds per image, one entry per run.
    pub per_run_ms: Vec<f64>,
    /// Arithmetic mean of `per_run_ms`.
    pub overall_ms: f64,
    pub stages: StageBreakdown,
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Times `runs` sequential passes over `images`. Each image is timed from
/// preprocessing through post-processing with a monotonic clock; a run's
/// mean is its total time divided by the image count. In 2NN mode an
/// image's time is the detector time plus the time to classify its faces.
pub fn benchmark_images(pipeline: &Pipeline, images: &[Image], runs: usize) -> Result<BenchReport, EvalError> {
    if images.is_empty() {
        return Err(EvalError::EmptyManifest);
    }
    if runs == 0 {
        return Err(EvalError::NoRuns);
    }
    let n = images.len() as f64;
    let mut per_run_ms = Vec::with_capacity(runs);
    let mut stages = StageBreakdown::default();
    for _ in 0..runs {
        let mut total = 0.0f64;
        for img in images {
            let start = Instant::now();
            let (_, t) = pipeline.run_timed(img)?;
            total += start.elapsed().as_secs_f64();
            stages.preprocess_ms += t.preprocess.as_secs_f64() * 1e3;
            stages.detector_ms += t.detector.as_secs_f64() * 1e3;
            stages.classifier_ms += t.classifier.as_secs_f64() * 1e3;
            stages.postprocess_ms += t.postprocess.as_secs_f64() * 1e3;
        }
        per_run_ms.push(total * 1e3 / n);
    }
    let count = n * runs as f64;
    stages.preprocess_ms /= count;
    stages.detector_ms /= count;
    stages.classifier_ms /= count;
    stages.postprocess_ms /= count;
    Ok(BenchReport {
        mode: pipeline.mode().to_string(),
        data_type: data_type(pipeline).into(),
        runs,
        images: images.len(),
        overall_ms: mean(&per_run_ms),
        per_run_ms,
        stages,
    })
}

/// Decodes every manifest image up front, then benchmarks. Any unreadable
/// image is an error here, since it would change what is being timed.
pub fn benchmark(pipeline: &Pipeline, manifest: &DatasetManifest, runs: usize) -> Result<BenchReport, EvalError> {
    if manifest.entries.is_empty() {
        return Err(EvalError::EmptyManifest);
    }
    let images = manifest
        .entries
        .iter()
        .map(|e| Image::load(&e.image))
        .collect::<Result<Vec<_>, _>>()?;
    benchmark_images(pipeline, &images, runs)
}

/// One row of a results table: an environment/data-type pair with a value
/// for each architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub environment: String,
    pub data_type: String,
    pub one_nn: Option<String>,
    pub two_nn: Option<String>,
}

/// Renders rows under the header `Environment | Data Type | 1NN | 2NN`.
pub fn render_table(rows: &[TableRow]) -> String {
    let header = ["Environment", "Data Type", "1NN", "2NN"];
    let cells: Vec<[String; 4]> = rows
        .iter()
        .map(|r| {
            [
                r.environment.clone(),
                r.data_type.clone(),
                r.one_nn.clone().unwrap_or_else(|| "-".into()),
                r.two_nn.clone().unwrap_or_else(|| "-".into()),
            ]
        })
        .collect();
    let widths: Vec<usize> = (0..4)
        .map(|c| cells.iter().map(|r| r[c].len()).chain([header[c].len()]).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    let line = |out: &mut String, row: [&str; 4]| {
        let parts: Vec<String> = row.iter().zip(&widths).map(|(s, w)| format!("{s:<w$}")).collect();
        let _ = writeln!(out, "| {} |", parts.join(" | "));
    };
    line(&mut out, header);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    let _ = writeln!(out, "|-{}-|", rule.join("-|-"));
    for r in &cells {
        line(&mut out, [&r[0], &r[1], &r[2], &r[3]]);
    }
    out
}

/// Short description of the host CPU, used as the table's environment.
pub fn host_environment() -> String {
    format!("CPU ({}-{})", std::env::consts::ARCH, std::env::consts::OS)
}

fn row(mode: &str, environment: &str, data_type: &str, value: String) -> TableRow {
    let (one_nn, two_nn) = if mode == "2NN" { (None, Some(value)) } else { (Some(value), None) };
    TableRow {
        environment: environment.into(),
        data_type: data_type.into(),
        one_nn,
        two_nn,
    }
}

impl EvalReport {
    pub fn table_row(&self, environment: &str) -> TableRow {
        row(&self.mode, environment, &self.data_type, format!("{:.1}%", self.map * 100.0))
    }
}

impl BenchReport {
    pub fn table_row(&self, environment: &str) -> TableRow {
        row(&self.mode, environment, &self.data_type, format!("{:.2}ms", self.overall_ms))
    }
}

/// Writes synthetic scenes as PNGs plus a manifest referencing them.
pub fn write_synthetic_dataset(dir: &Path, count: usize, seed: u64, size: (usize, usize)) -> Result<DatasetManifest, EvalError> {
    let io = |p: &Path, e: String| EvalError::Io {
        path: p.display().to_string(),
        message: e,
    };
    std::fs::create_dir_all(dir).map_err(|e| io(dir, e.to_string()))?;
    let mut entries = Vec::with_capacity(count);
    for i in 0..count {
        let scene = crate::pipeline::synthetic_scene(seed.wrapping_add(i as u64), size.0, size.1);
        let name = format!("scene_{i:04}.png");
        scene.image.save_png(&dir.join(&name))?;
        entries.push(ManifestEntry {
            image: name.into(),
            boxes: scene
                .objects
                .iter()
                .map(|o| GtBox {
                    label: o.label,
                    ymin: o.bbox.ymin,
                    xmin: o.bbox.xmin,
                    ymax: o.bbox.ymax,
                    xmax: o.bbox.xmax,
                })
                .collect(),
        });
    }
    let manifest = DatasetManifest {
        split: Split::Test,
        entries,
    };
    let path = dir.join("manifest.json");
    std::fs::write(&path, manifest.to_json()).map_err(|e| io(&path, e.to_string()))?;
    Ok(manifest)
}
