use std::io::Write;
use std::path::{Path, PathBuf};

use maskedge::evalbench::{self, host_environment, load_manifest, render_table};
use maskedge::model::{build_fixture, extend_class_head, load_model, save_model, FixtureKind};
use maskedge::par::Jobs;
use maskedge::pipeline::annotate;
use maskedge::postproc::PostprocessConfig;
use maskedge::{Image, ModelGraph, Pipeline, PipelineConfig};
use serde::Serialize;

use crate::args::{required, BenchArgs, EvalArgs, FixtureArgs, Format, InferArgs, Mode, PipelineArgs, SurgeryArgs};
use crate::CliError;

fn read_model(path: &Path) -> Result<ModelGraph, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    load_model(&bytes).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Writes to `path`, or stdout when absent.
fn emit(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => write_file(p, text.as_bytes()),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Io(format!("stdout: {e}"))),
    }
}

fn build_pipeline(a: &PipelineArgs, defaults: PostprocessConfig) -> Result<Pipeline, CliError> {
    let model = read_model(&required(a.model.clone(), "model")?)?;
    let mut cfg = match a.mode.unwrap_or(Mode::OneNn) {
        Mode::OneNn => {
            if a.classifier.is_some() {
                return Err(CliError::Validation("--classifier is only used with --mode 2nn".into()));
            }
            PipelineConfig::one_nn(model)
        }
        Mode::TwoNn => PipelineConfig::two_nn(model, read_model(&required(a.classifier.clone(), "classifier")?)?),
    };
    cfg.postprocess = PostprocessConfig {
        score_threshold: a.score_threshold.unwrap_or(defaults.score_threshold),
        iou_threshold: a.iou_threshold.unwrap_or(defaults.iou_threshold),
        max_detections: a.max_detections.unwrap_or(defaults.max_detections),
    };
    if let Some(t) = a.face_threshold {
        cfg.face_threshold = t;
    }
    if let Some(m) = a.crop_margin {
        cfg.crop_margin = m;
    }
    Ok(Pipeline::new(cfg)?)
}

#[derive(Serialize)]
struct DetectionLine<'a> {
    label: &'a str,
    class_id: u32,
    score: f32,
    ymin: f32,
    xmin: f32,
    ymax: f32,
    xmax: f32,
}

pub fn infer(a: InferArgs) -> Result<(), CliError> {
    let pipeline = build_pipeline(&a.pipeline, PostprocessConfig::INFER)?;
    let img = Image::load(&required(a.image, "image")?)?;
    let dets = pipeline.run(&img)?;
    let names = pipeline.class_names();
    let mut out = String::new();
    for d in &dets {
        let line = DetectionLine {
            label: &names[d.class_id as usize - 1],
            class_id: d.class_id,
            score: d.score,
            ymin: d.bbox.ymin,
            xmin: d.bbox.xmin,
            ymax: d.bbox.ymax,
            xmax: d.bbox.xmax,
        };
        out.push_str(&serde_json::to_string(&line).expect("plain struct serializes"));
        out.push('\n');
    }
    emit(a.output.as_deref(), &out)?;
    if let Some(p) = a.annotate {
        annotate(&img, &dets, &names).save_png(&p)?;
    }
    log::info!("{} detections", dets.len());
    Ok(())
}

fn render<T: Serialize>(report: &T, format: Format, row: impl FnOnce() -> evalbench::TableRow) -> String {
    match format {
        Format::Json => serde_json::to_string_pretty(report).expect("report serializes") + "\n",
        Format::Table => render_table(&[row()]),
    }
}

pub fn eval(a: EvalArgs) -> Result<(), CliError> {
    let pipeline = build_pipeline(&a.pipeline, PostprocessConfig::EVAL)?;
    let manifest = load_manifest(&required(a.manifest, "manifest")?)?;
    let report = evalbench::evaluate(&pipeline, &manifest, Jobs::from_count(a.jobs.unwrap_or(0)))?;
    let text = render(&report, a.format.unwrap_or(Format::Json), || report.table_row(&host_environment()));
    emit(a.output.as_deref(), &text)?;
    if !report.skipped.is_empty() {
        return Err(CliError::Io(format!(
            "{} of {} images could not be read and were skipped",
            report.skipped.len(),
            report.skipped.len() + report.images
        )));
    }
    Ok(())
}

pub fn bench(a: BenchArgs) -> Result<(), CliError> {
    let pipeline = build_pipeline(&a.pipeline, PostprocessConfig::EVAL)?;
    let manifest = load_manifest(&required(a.manifest, "manifest")?)?;
    let report = evalbench::benchmark(&pipeline, &manifest, a.runs.unwrap_or(3))?;
    let text = render(&report, a.format.unwrap_or(Format::Json), || report.table_row(&host_environment()));
    emit(a.output.as_deref(), &text)
}

pub fn surgery(a: SurgeryArgs) -> Result<(), CliError> {
    let face = read_model(&required(a.input, "in")?)?;
    let out = required(a.out, "out")?;
    let epsilon = a.epsilon.unwrap_or(maskedge::model::DEFAULT_EPSILON);
    let mask = extend_class_head(&face, epsilon).map_err(|e| CliError::Validation(e.to_string()))?;
    write_file(&out, &save_model(&mask))
}

#[derive(Serialize)]
struct FixtureSummary {
    seed: u64,
    models: Vec<PathBuf>,
    manifest: Option<PathBuf>,
}

pub fn make_fixture(a: FixtureArgs) -> Result<(), CliError> {
    let dir = required(a.out_dir, "out-dir")?;
    let seed = a.seed.unwrap_or(1);
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let kinds = [
        (FixtureKind::MaskDetector, "mask_detector"),
        (FixtureKind::FaceDetector, "face_detector"),
        (FixtureKind::Classifier, "classifier"),
    ];
    let mut models = Vec::new();
    for (kind, name) in kinds {
        for (quantized, suffix) in [(false, "f32"), (true, "u8")] {
            let path = dir.join(format!("{name}.{suffix}.qmdl"));
            write_file(&path, &save_model(&build_fixture(kind, seed, quantized)))?;
            models.push(path);
        }
    }
    let manifest = match a.scenes.unwrap_or(0) {
        0 => None,
        n => {
            let side = a.scene_size.unwrap_or(64);
            if side == 0 {
                return Err(CliError::Validation("--scene-size must be positive".into()));
            }
            let scenes = dir.join("scenes");
            evalbench::write_synthetic_dataset(&scenes, n, seed, (side, side))?;
            Some(scenes.join("manifest.json"))
        }
    };
    let summary = FixtureSummary { seed, models, manifest };
    emit(None, &(serde_json::to_string(&summary).expect("summary serializes") + "\n"))?;
    Ok(())
}
