//! End-to-end inference.
//!
//! 1NN runs one detector over {mask, nomask}. 2NN runs a face detector,
//! crops each face above the face threshold, classifies the crop and
//! reports `face_score * class_score` under the classifier's label.
//! Model input sizes come from each model's metadata.

mod draw;
mod preprocess;
mod synth;

pub use draw::annotate;
pub use preprocess::{preprocess_float, preprocess_quant, resize_bilinear};
pub use synth::{synthetic_scene, Scene, SceneObject};

use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{Engine, EngineError, TensorValue};
use crate::model::{ModelError, ModelGraph, ModelKind};
use crate::nnops::sigmoid;
use crate::postproc::{self, generate_anchors, Anchor, BBox, Detection, PostprocError, PostprocessConfig};
use crate::qtensor::{dequantize, round_half_away, QuantParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("image is empty")]
    EmptyImage,
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("invalid pipeline configuration: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Postproc(#[from] PostprocError),
}

/// 8-bit RGB image, row-major, 3 bytes per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl Image {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self, PipelineError> {
        if data.len() != height * width * 3 {
            return Err(PipelineError::InvalidImage(format!(
                "{height}x{width} RGB needs {} bytes, got {}",
                height * width * 3,
                data.len()
            )));
        }
        Ok(Self { height, width, data })
    }

    pub fn filled(height: usize, width: usize, rgb: [u8; 3]) -> Self {
        let data = rgb.iter().copied().cycle().take(height * width * 3).collect();
        Self { height, width, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn is_empty(&self) -> bool {
        self.height == 0 || self.width == 0
    }

    /// Decodes PNG or JPEG; other color types are converted to RGB.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let io = |message: String| PipelineError::Io {
            path: path.display().to_string(),
            message,
        };
        let rgb = image::open(path).map_err(|e| io(e.to_string()))?.to_rgb8();
        let (w, h) = rgb.dimensions();
        Self::new(h as usize, w as usize, rgb.into_raw())
    }

    pub fn save_png(&self, path: &Path) -> Result<(), PipelineError> {
        image::save_buffer_with_format(
            path,
            &self.data,
            self.width as u32,
            self.height as u32,
            image::ExtendedColorType::Rgb8,
            image::ImageFormat::Png,
        )
        .map_err(|e| PipelineError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    /// Copies rows `y0..y1` and columns `x0..x1`.
    pub fn sub_image(&self, y0: usize, x0: usize, y1: usize, x1: usize) -> Self {
        let mut data = Vec::with_capacity((y1 - y0) * (x1 - x0) * 3);
        for y in y0..y1 {
            data.extend_from_slice(&self.data[(y * self.width + x0) * 3..(y * self.width + x1) * 3]);
        }
        Self {
            height: y1 - y0,
            width: x1 - x0,
            data,
        }
    }
}

/// Crops a normalized box, optionally grown by `margin` times its size on
/// every side. Edges are scaled to pixels, rounded half away from zero and
/// clamped to the image; `None` if nothing remains.
pub fn crop_face(img: &Image, bbox: &BBox, margin: f32) -> Option<Image> {
    let (h, w) = (img.height as f64, img.width as f64);
    let my = f64::from(margin) * f64::from(bbox.ymax - bbox.ymin);
    let mx = f64::from(margin) * f64::from(bbox.xmax - bbox.xmin);
    let edge = |v: f64, scale: f64| round_half_away(v * scale).clamp(0.0, scale) as usize;
    let y0 = edge(f64::from(bbox.ymin) - my, h);
    let y1 = edge(f64::from(bbox.ymax) + my, h);
    let x0 = edge(f64::from(bbox.xmin) - mx, w);
    let x1 = edge(f64::from(bbox.xmax) + mx, w);
    (y1 > y0 && x1 > x0).then(|| img.sub_image(y0, x0, y1, x1))
}

/// Dequantization of one u8 output tensor, and its sigmoid, as lookup tables.
#[derive(Debug, Clone)]
struct OutputTables {
    value: Vec<f32>,
    sigmoid: Vec<f32>,
}

impl OutputTables {
    fn new(qp: QuantParams) -> Self {
        let value: Vec<f32> = (0..=255u8).map(|q| dequantize(q, qp) as f32).collect();
        let sigmoid = value.iter().map(|&v| sigmoid(v)).collect();
        Self { value, sigmoid }
    }
}

/// Wall-clock time per stage of one pipeline invocation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub preprocess: Duration,
    pub detector: Duration,
    pub classifier: Duration,
    pub postprocess: Duration,
}

impl StageTimings {
    pub fn total(&self) -> Duration {
        self.preprocess + self.detector + self.classifier + self.postprocess
    }
}

/// Prepared SSD detector on either path.
#[derive(Debug, Clone)]
pub struct Detector {
    engine: Engine,
    anchors: Vec<Anchor>,
    coder: postproc::BoxCoder,
    box_tables: Vec<OutputTables>,
    class_tables: Vec<OutputTables>,
}

impl Detector {
    pub fn new(graph: ModelGraph) -> Result<Self, PipelineError> {
        if graph.kind() != ModelKind::Detector {
            return Err(PipelineError::Config("expected a detector model".into()));
        }
        let cfg = graph.anchor_config().expect("validated detector").clone();
        let tables = |outs: &[usize]| -> Vec<OutputTables> {
            outs.iter()
                .filter_map(|&i| graph.tensor(i).qparams.map(OutputTables::new))
                .collect()
        };
        let box_tables = tables(graph.box_outputs());
        let class_tables = tables(graph.class_outputs());
        Ok(Self {
            anchors: generate_anchors(&cfg),
            coder: cfg.coder,
            box_tables,
            class_tables,
            engine: Engine::new(graph)?,
        })
    }

    pub fn graph(&self) -> &ModelGraph {
        self.engine.graph()
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn anchors(&self) -> &[Anchor] {
        &self.anchors
    }

    pub fn num_classes(&self) -> usize {
        self.graph().num_classes()
    }

    fn input(&self, img: &Image) -> Result<TensorValue, PipelineError> {
        let g = self.graph();
        Ok(match g.input_qparams() {
            Some(qp) => TensorValue::U8(preprocess_quant(img, g.input_size(), qp)?),
            None => TensorValue::F32(preprocess_float(img, g.input_size())?),
        })
    }

    /// Box regressions and per-class sigmoid scores, concatenated over
    /// feature maps in anchor order.
    fn heads(&self, input: TensorValue) -> Result<(Vec<f32>, Vec<f32>), PipelineError> {
        let acts = self.engine.run(input)?;
        let g = self.graph();
        let mut boxes = Vec::with_capacity(self.anchors.len() * 4);
        let mut scores = Vec::with_capacity(self.anchors.len() * self.num_classes());
        for (k, (&b, &c)) in g.box_outputs().iter().zip(g.class_outputs()).enumerate() {
            match (acts.get(b).expect("box output"), acts.get(c).expect("class output")) {
                (TensorValue::U8(bq), TensorValue::U8(cq)) => {
                    let (bt, ct) = (&self.box_tables[k], &self.class_tables[k]);
                    boxes.extend(bq.data().iter().map(|&q| bt.value[usize::from(q)]));
                    scores.extend(cq.data().iter().map(|&q| ct.sigmoid[usize::from(q)]));
                }
                (TensorValue::F32(bf), TensorValue::F32(cf)) => {
                    boxes.extend_from_slice(bf.data());
                    scores.extend(cf.data().iter().map(|&v| sigmoid(v)));
                }
                _ => unreachable!("engine outputs match the model's path"),
            }
        }
        Ok((boxes, scores))
    }

    pub fn detect(&self, img: &Image, cfg: &PostprocessConfig) -> Result<Vec<Detection>, PipelineError> {
        self.detect_timed(img, cfg).map(|(d, _)| d)
    }

    pub fn detect_timed(
        &self,
        img: &Image,
        cfg: &PostprocessConfig,
    ) -> Result<(Vec<Detection>, StageTimings), PipelineError> {
        let mut t = StageTimings::default();
        let start = Instant::now();
        let input = self.input(img)?;
        t.preprocess = start.elapsed();
        let start = Instant::now();
        let (boxes, scores) = self.heads(input)?;
        t.detector = start.elapsed();
        let start = Instant::now();
        let dets = postproc::detect(&boxes, &scores, &self.anchors, &self.coder, self.num_classes(), cfg)?;
        t.postprocess = start.elapsed();
        Ok((dets, t))
    }

    /// Per-class scores for every anchor, anchor-major.
    pub fn scores(&self, img: &Image) -> Result<Vec<f32>, PipelineError> {
        Ok(self.heads(self.input(img)?)?.1)
    }
}

/// Prepared mask/nomask classifier on either path.
#[derive(Debug, Clone)]
pub struct Classifier {
    engine: Engine,
    logit_table: Option<OutputTables>,
}

impl Classifier {
    pub fn new(graph: ModelGraph) -> Result<Self, PipelineError> {
        if graph.kind() != ModelKind::Classifier {
            return Err(PipelineError::Config("expected a classifier model".into()));
        }
        let logits = graph.logits_output().expect("validated classifier");
        Ok(Self {
            logit_table: graph.tensor(logits).qparams.map(OutputTables::new),
            engine: Engine::new(graph)?,
        })
    }

    pub fn graph(&self) -> &ModelGraph {
        self.engine.graph()
    }

    /// Softmax class probabilities.
    pub fn classify(&self, img: &Image) -> Result<Vec<f32>, PipelineError> {
        let g = self.graph();
        let input = match g.input_qparams() {
            Some(qp) => TensorValue::U8(preprocess_quant(img, g.input_size(), qp)?),
            None => TensorValue::F32(preprocess_float(img, g.input_size())?),
        };
        let acts = self.engine.run(input)?;
        let logits: Vec<f32> = match acts.get(g.logits_output().expect("classifier")).expect("logits") {
            TensorValue::U8(q) => {
                let t = self.logit_table.as_ref().expect("quantized logits");
                q.data().iter().map(|&v| t.value[usize::from(v)]).collect()
            }
            TensorValue::F32(f) => f.data().to_vec(),
        };
        Ok(softmax(&logits))
    }
}

fn softmax(logits: &[f32]) -> Vec<f32> {
    let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let exps: Vec<f32> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f32 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

/// Index of the largest probability; ties go to the lower index.
pub fn argmax(probs: &[f32]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PipelineMode {
    #[serde(rename = "1nn")]
    OneNN,
    #[serde(rename = "2nn")]
    TwoNN,
}

impl std::fmt::Display for PipelineMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PipelineMode::OneNN => "1NN",
            PipelineMode::TwoNN => "2NN",
        })
    }
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub mode: PipelineMode,
    /// Mask detector (1NN) or face detector (2NN).
    pub detector: ModelGraph,
    /// Required in 2NN mode.
    pub classifier: Option<ModelGraph>,
    pub postprocess: PostprocessConfig,
    /// 2NN: faces scoring below this are not classified.
    pub face_threshold: f32,
    /// 2NN: crop margin as a fraction of the face box size.
    pub crop_margin: f32,
}

impl PipelineConfig {
    pub fn one_nn(detector: ModelGraph) -> Self {
        Self {
            mode: PipelineMode::OneNN,
            detector,
            classifier: None,
            postprocess: PostprocessConfig::default(),
            face_threshold: 0.5,
            crop_margin: 0.0,
        }
    }

    pub fn two_nn(face_detector: ModelGraph, classifier: ModelGraph) -> Self {
        Self {
            mode: PipelineMode::TwoNN,
            classifier: Some(classifier),
            ..Self::one_nn(face_detector)
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::Config(m.to_string()));
        if self.detector.kind() != ModelKind::Detector {
            return bad("detector model is not a detector");
        }
        let p = &self.postprocess;
        if !(0.0..=1.0).contains(&p.score_threshold) || !(0.0..=1.0).contains(&p.iou_threshold) {
            return bad("score and IoU thresholds must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.face_threshold) {
            return bad("face threshold must lie in [0, 1]");
        }
        if !(self.crop_margin.is_finite() && self.crop_margin >= 0.0) {
            return bad("crop margin must be a non-negative number");
        }
        match (self.mode, &self.classifier) {
            (PipelineMode::OneNN, _) => {
                if self.detector.num_classes() != 2 {
                    return bad("1NN needs a two-class (mask, nomask) detector");
                }
            }
            (PipelineMode::TwoNN, None) => return bad("2NN needs a classifier model"),
            (PipelineMode::TwoNN, Some(c)) => {
                if c.kind() != ModelKind::Classifier || c.num_classes() != 2 {
                    return bad("2NN classifier must be a two-class classifier");
                }
            }
        }
        Ok(())
    }
}

/// A prepared pipeline. Stateless between calls and shareable across threads.
#[derive(Debug, Clone)]
pub struct Pipeline {
    mode: PipelineMode,
    detector: Detector,
    classifier: Option<Classifier>,
    postprocess: PostprocessConfig,
    face_threshold: f32,
    crop_margin: f32,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig) -> Result<Self, PipelineError> {
        cfg.validate()?;
        Ok(Self {
            mode: cfg.mode,
            detector: Detector::new(cfg.detector)?,
            classifier: match cfg.mode {
                PipelineMode::OneNN => None,
                PipelineMode::TwoNN => Some(Classifier::new(cfg.classifier.expect("validated"))?),
            },
            postprocess: cfg.postprocess,
            face_threshold: cfg.face_threshold,
            crop_margin: cfg.crop_margin,
        })
    }

    pub fn mode(&self) -> PipelineMode {
        self.mode
    }

    pub fn detector(&self) -> &Detector {
        &self.detector
    }

    pub fn classifier(&self) -> Option<&Classifier> {
        self.classifier.as_ref()
    }

    pub fn is_quantized(&self) -> bool {
        self.detector.graph().is_quantized()
    }

    /// Names for class ids 1, 2, ... of the emitted detections.
    pub fn class_names(&self) -> Vec<String> {
        match &self.classifier {
            Some(c) => c.graph().class_names().to_vec(),
            None => self.detector.graph().class_names().to_vec(),
        }
    }

    pub fn run(&self, img: &Image) -> Result<Vec<Detection>, PipelineError> {
        self.run_timed(img).map(|(d, _)| d)
    }

    pub fn run_timed(&self, img: &Image) -> Result<(Vec<Detection>, StageTimings), PipelineError> {
        match self.mode {
            PipelineMode::OneNN => self.detector.detect_timed(img, &self.postprocess),
            PipelineMode::TwoNN => self.run_2nn_timed(img),
        }
    }

    pub fn run_1nn(&self, img: &Image) -> Result<Vec<Detection>, PipelineError> {
        if self.mode != PipelineMode::OneNN {
            return Err(PipelineError::Config("pipeline is not in 1NN mode".into()));
        }
        self.run(img)
    }

    pub fn run_2nn(&self, img: &Image) -> Result<Vec<Detection>, PipelineError> {
        if self.mode != PipelineMode::TwoNN {
            return Err(PipelineError::Config("pipeline is not in 2NN mode".into()));
        }
        self.run(img)
    }

    fn run_2nn_timed(&self, img: &Image) -> Result<(Vec<Detection>, StageTimings), PipelineError> {
        let classifier = self.classifier.as_ref().expect("2NN has a classifier");
        let face_cfg = PostprocessConfig {
            score_threshold: self.face_threshold,
            ..self.postprocess
        };
        let (faces, mut t) = self.detector.detect_timed(img, &face_cfg)?;
        let mut out = Vec::with_capacity(faces.len());
        for face in faces {
            let start = Instant::now();
            let crop = crop_face(img, &face.bbox, self.crop_margin);
            t.preprocess += start.elapsed();
            let Some(crop) = crop else {
                log::warn!("skipping degenerate face crop {:?}", face.bbox);
                continue;
            };
            let start = Instant::now();
            let probs = classifier.classify(&crop)?;
            t.classifier += start.elapsed();
            out.push(fuse(&face, &probs));
        }
        let start = Instant::now();
        out.sort_by(postproc::priority);
        t.postprocess += start.elapsed();
        Ok((out, t))
    }
}

/// 2NN score fusion: the face box under the classifier's arg-max label,
/// scored `face.score * p[label]`.
pub fn fuse(face: &Detection, probs: &[f32]) -> Detection {
    let k = argmax(probs);
    Detection {
        bbox: face.bbox,
        class_id: k as u32 + 1,
        score: face.score * probs[k],
        anchor: face.anchor,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_fixture, build_fixture_model, FixtureKind};

    #[test]
    fn image_length_checked() {
        assert!(Image::new(2, 2, vec![0; 11]).is_err());
        assert!(Image::new(2, 2, vec![0; 12]).is_ok());
    }

    #[test]
    fn crop_examples() {
        let img = Image::new(100, 100, (0..30000).map(|i| (i % 251) as u8).collect()).unwrap();
        let whole = crop_face(&img, &BBox::new(0.0, 0.0, 1.0, 1.0), 0.0).unwrap();
        assert_eq!(whole, img);
        let c = crop_face(&img, &BBox::new(0.25, 0.25, 0.75, 0.75), 0.0).unwrap();
        assert_eq!((c.height(), c.width()), (50, 50));
        assert_eq!(&c.data()[..3], &img.data()[(25 * 100 + 25) * 3..][..3]);
        assert!(crop_face(&img, &BBox::new(0.5, 0.5, 0.501, 0.501), 0.0).is_none());
        let grown = crop_face(&img, &BBox::new(0.4, 0.4, 0.6, 0.6), 0.5).unwrap();
        assert_eq!((grown.height(), grown.width()), (40, 40));
    }

    #[test]
    fn fusion_examples() {
        let face = Detection {
            bbox: BBox::new(0.1, 0.1, 0.5, 0.5),
            class_id: 1,
            score: 0.8,
            anchor: 4,
        };
        let d = fuse(&face, &[0.1, 0.9]);
        assert_eq!(d.class_id, 2);
        assert_eq!(d.score, 0.8f32 * 0.9f32);
        assert!((d.score - 0.72).abs() < 1e-6);
        let tie = fuse(&face, &[0.5, 0.5]);
        assert_eq!(tie.class_id, 1);
        assert_eq!(tie.score, 0.4);
    }

    #[test]
    fn config_validation() {
        let det = build_fixture_model(1, false);
        let face = build_fixture(FixtureKind::FaceDetector, 1, false);
        assert!(PipelineConfig::one_nn(det.clone()).validate().is_ok());
        assert!(PipelineConfig::one_nn(face.clone()).validate().is_err());
        let mut two = PipelineConfig::two_nn(face, build_fixture(FixtureKind::Classifier, 1, false));
        assert!(two.validate().is_ok());
        two.classifier = None;
        assert!(two.validate().is_err());
    }

    #[test]
    fn one_nn_is_deterministic_and_valid() {
        let p = Pipeline::new(PipelineConfig::one_nn(build_fixture_model(1, true))).unwrap();
        let img = synthetic_scene(3, 64, 64).image;
        let a = p.run_1nn(&img).unwrap();
        assert_eq!(a, p.run_1nn(&img).unwrap());
        for d in &a {
            assert!(d.bbox.is_normalized());
            assert!((0.0..=1.0).contains(&d.score));
            assert!(d.class_id == 1 || d.class_id == 2);
        }
        assert!(p.run_2nn(&img).is_err());
    }

    #[test]
    fn two_nn_scores_bounded_by_face_scores() {
        let face = build_fixture(FixtureKind::FaceDetector, 2, false);
        let cls = build_fixture(FixtureKind::Classifier, 2, false);
        let mut cfg = PipelineConfig::two_nn(face.clone(), cls);
        cfg.face_threshold = 0.0;
        let p = Pipeline::new(cfg).unwrap();
        let img = synthetic_scene(9, 64, 64).image;
        let faces = Detector::new(face)
            .unwrap()
            .detect(&img, &PostprocessConfig { score_threshold: 0.0, ..PostprocessConfig::EVAL })
            .unwrap();
        let fused = p.run_2nn(&img).unwrap();
        assert_eq!(fused.len(), faces.len());
        for d in &fused {
            let f = faces.iter().find(|f| f.anchor == d.anchor).unwrap();
            assert!(d.score <= f.score);
        }
    }

    #[test]
    fn two_nn_with_no_faces_is_empty() {
        let mut cfg = PipelineConfig::two_nn(
            build_fixture(FixtureKind::FaceDetector, 1, false),
            build_fixture(FixtureKind::Classifier, 1, false),
        );
        cfg.face_threshold = 1.0;
        let p = Pipeline::new(cfg).unwrap();
        assert!(p.run(&Image::filled(32, 32, [0, 0, 0])).unwrap().is_empty());
    }
}
