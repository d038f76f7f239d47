//! Deterministic desk-scale models.
//!
//! All three fixtures take a 32x32x3 input and share a MobileNetV2-style
//! trunk: a stride-2 3x3 stem (16 channels), an inverted residual block
//! with stride 2 (16 -> 96 -> 24) and one with stride 1 and a skip
//! connection (24 -> 144 -> 24).
//!
//! Detectors add two SSD feature maps, 4x4x32 and 2x2x32, each with a 3x3
//! box head (`A * 4` channels) and a 3x3 class head (`A * C` channels),
//! `A = 3` aspect ratios. The classifier instead pools globally and ends
//! in two dense layers (128 units, then one logit per class).
//!
//! Weights are He-uniform, `U(-sqrt(6 / fan_in), +sqrt(6 / fan_in))`, drawn
//! from [`XorShift64Star`] in tensor-table order; biases are `U(-0.1, 0.1)`.
//! Box heads are scaled by 0.1 so decoded boxes stay near their anchors.

use super::graph::{DType, GraphBuilder, ModelGraph, OpAttrs, OpCode, TensorData, KEY_BOX_OUTPUTS, KEY_CLASSES, KEY_CLASS_OUTPUTS, KEY_KIND, KEY_LOGITS};
use super::quantize::quantize_graph;
use crate::nnops::{Activation, ConvSpec, Padding};
use crate::pipeline::{preprocess_float, synthetic_scene};
use crate::postproc::{AnchorConfig, BoxCoder, FeatureMapAnchors};
use crate::qtensor::FTensor;
use crate::rng::XorShift64Star;

/// Images in the activation calibration batch of quantized fixtures.
pub const CALIBRATION_IMAGES: usize = 16;

const INPUT: usize = 32;
const ASPECT_RATIOS: [f32; 3] = [1.0, 2.0, 0.5];
const BOX_HEAD_GAIN: f32 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FixtureKind {
    /// 1NN detector over {mask, nomask}.
    MaskDetector,
    /// Single-class face detector, the first stage of 2NN.
    FaceDetector,
    /// Binary mask/nomask classifier, the second stage of 2NN.
    Classifier,
}

pub fn fixture_anchor_config() -> AnchorConfig {
    AnchorConfig {
        feature_maps: vec![
            FeatureMapAnchors {
                grid_h: 4,
                grid_w: 4,
                scale: 0.3,
                aspect_ratios: ASPECT_RATIOS.to_vec(),
            },
            FeatureMapAnchors {
                grid_h: 2,
                grid_w: 2,
                scale: 0.6,
                aspect_ratios: ASPECT_RATIOS.to_vec(),
            },
        ],
        coder: BoxCoder::default(),
    }
}

/// The 1NN mask detector.
pub fn build_fixture_model(seed: u64, quantized: bool) -> ModelGraph {
    build_fixture(FixtureKind::MaskDetector, seed, quantized)
}

pub fn build_fixture(kind: FixtureKind, seed: u64, quantized: bool) -> ModelGraph {
    let float = build_float(kind, seed);
    if quantized {
        quantize_graph(&float, &calibration_inputs(seed)).expect("fixture quantization")
    } else {
        float
    }
}

/// Preprocessed synthetic scenes used to calibrate activation ranges.
pub fn calibration_inputs(seed: u64) -> Vec<FTensor> {
    (0..CALIBRATION_IMAGES as u64)
        .map(|i| {
            let scene = synthetic_scene(seed.wrapping_mul(1_000_003).wrapping_add(i), 64, 64);
            preprocess_float(&scene.image, (INPUT, INPUT)).expect("non-empty scene")
        })
        .collect()
}

struct Net {
    b: GraphBuilder,
    rng: XorShift64Star,
}

impl Net {
    fn weights(&mut self, name: &str, shape: Vec<usize>, fan_in: usize, gain: f32) -> usize {
        let limit = gain * (6.0 / fan_in as f32).sqrt();
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| self.rng.uniform(-limit, limit)).collect();
        self.b.constant(name, shape, TensorData::F32(data), None)
    }

    fn bias(&mut self, name: &str, n: usize, gain: f32) -> usize {
        let data = (0..n).map(|_| gain * self.rng.uniform(-0.1, 0.1)).collect();
        self.b.constant(name, vec![n], TensorData::F32(data), None)
    }

    fn channels(&self, t: usize) -> usize {
        *self.b.shape_of(t).last().expect("non-empty shape")
    }

    fn conv(&mut self, name: &str, x: usize, out_c: usize, spec: ConvSpec, gain: f32) -> usize {
        let in_c = self.channels(x);
        let (kh, kw) = spec.kernel;
        let w = self.weights(&format!("{name}/weights"), vec![out_c, kh, kw, in_c], kh * kw * in_c, gain);
        let b = self.bias(&format!("{name}/bias"), out_c, gain);
        self.b
            .op(OpCode::Conv2d, vec![x, w, b], OpAttrs::conv(&spec, 0), name, None)
            .expect("fixture conv")
    }

    fn depthwise(&mut self, name: &str, x: usize, stride: usize) -> usize {
        let c = self.channels(x);
        let spec = ConvSpec::new(3, stride, Padding::Same)
            .depthwise()
            .with_activation(Activation::Relu6);
        let w = self.weights(&format!("{name}/weights"), vec![1, 3, 3, c], 9, 1.0);
        let b = self.bias(&format!("{name}/bias"), c, 1.0);
        self.b
            .op(OpCode::DepthwiseConv2d, vec![x, w, b], OpAttrs::conv(&spec, 1), name, None)
            .expect("fixture depthwise")
    }

    fn inverted_residual(&mut self, name: &str, x: usize, expand: usize, out_c: usize, stride: usize) -> usize {
        let in_c = self.channels(x);
        let pw = ConvSpec::new(1, 1, Padding::Same);
        let h = self.conv(
            &format!("{name}/expand"),
            x,
            in_c * expand,
            pw.with_activation(Activation::Relu6),
            1.0,
        );
        let h = self.depthwise(&format!("{name}/depthwise"), h, stride);
        let h = self.conv(&format!("{name}/project"), h, out_c, pw, 1.0);
        if stride == 1 && in_c == out_c {
            self.b
                .op(OpCode::Add, vec![x, h], OpAttrs::default(), &format!("{name}/add"), None)
                .expect("fixture add")
        } else {
            h
        }
    }

    fn dense(&mut self, name: &str, x: usize, units: usize, activation: Activation) -> usize {
        let features = self.channels(x);
        let w = self.weights(&format!("{name}/weights"), vec![units, features], features, 1.0);
        let b = self.bias(&format!("{name}/bias"), units, 1.0);
        self.b
            .op(OpCode::Dense, vec![x, w, b], OpAttrs::activation(activation), name, None)
            .expect("fixture dense")
    }
}

fn build_float(kind: FixtureKind, seed: u64) -> ModelGraph {
    let mut net = Net {
        b: GraphBuilder::new(),
        rng: XorShift64Star::new(seed),
    };
    let x = net.b.input("image", DType::F32, vec![1, INPUT, INPUT, 3], None);
    let relu6 = |s: ConvSpec| s.with_activation(Activation::Relu6);
    let h = net.conv("stem", x, 16, relu6(ConvSpec::new(3, 2, Padding::Same)), 1.0);
    let h = net.inverted_residual("block1", h, 6, 24, 2);
    let h = net.inverted_residual("block2", h, 6, 24, 1);

    let classes: &[&str] = match kind {
        FixtureKind::MaskDetector | FixtureKind::Classifier => &["mask", "nomask"],
        FixtureKind::FaceDetector => &["face"],
    };
    net.b.meta(KEY_CLASSES, classes.join(","));

    match kind {
        FixtureKind::Classifier => {
            let p = net
                .b
                .op(OpCode::AvgPool2d, vec![h], OpAttrs::default(), "pool", None)
                .expect("fixture pool");
            let f = net
                .b
                .op(OpCode::Flatten, vec![p], OpAttrs::default(), "flatten", None)
                .expect("fixture flatten");
            let d = net.dense("fc", f, 128, Activation::Relu);
            net.dense("logits", d, classes.len(), Activation::None);
            net.b.meta(KEY_KIND, "classifier").meta(KEY_LOGITS, "logits");
        }
        FixtureKind::MaskDetector | FixtureKind::FaceDetector => {
            let anchors = fixture_anchor_config();
            let fm1 = net.conv("fm1", h, 32, relu6(ConvSpec::new(3, 2, Padding::Same)), 1.0);
            let fm2 = net.conv("fm2", fm1, 32, relu6(ConvSpec::new(3, 2, Padding::Same)), 1.0);
            let mut box_names = Vec::new();
            let mut class_names = Vec::new();
            for (i, (fm, map)) in [fm1, fm2].into_iter().zip(&anchors.feature_maps).enumerate() {
                let a = map.anchors_per_location();
                let head = ConvSpec::new(3, 1, Padding::Same);
                let bn = format!("head{i}/box");
                let cn = format!("head{i}/class");
                net.conv(&bn, fm, a * 4, head, BOX_HEAD_GAIN);
                net.conv(&cn, fm, a * classes.len(), head, 1.0);
                box_names.push(bn);
                class_names.push(cn);
            }
            net.b
                .meta(KEY_KIND, "detector")
                .meta(KEY_BOX_OUTPUTS, box_names.join(","))
                .meta(KEY_CLASS_OUTPUTS, class_names.join(","));
            for (k, v) in anchors.to_metadata() {
                net.b.meta(k, v);
            }
        }
    }
    net.b.finish().expect("fixture graph is valid")
}
