use maskedge::model::{
    build_fixture, calibration_inputs, extend_class_head, load_model, quantize_graph, save_model, FixtureKind,
    ModelError, DEFAULT_EPSILON,
};
use maskedge::pipeline::{synthetic_scene, Detector};
use maskedge::{Pipeline, PipelineConfig};

fn face() -> maskedge::ModelGraph {
    build_fixture(FixtureKind::FaceDetector, 4, false)
}

#[test]
fn extended_model_is_a_working_mask_detector() {
    let face = face();
    let mask = extend_class_head(&face, DEFAULT_EPSILON).unwrap();
    assert_eq!(face.num_classes(), 1);
    assert_eq!(mask.num_classes(), 2);
    assert_eq!(mask.class_names(), ["mask", "nomask"]);
    assert_eq!(mask.anchor_config(), face.anchor_config());
    assert_eq!(mask.input_size(), face.input_size());
    assert_eq!(load_model(&save_model(&mask)).unwrap(), mask);
    let p = Pipeline::new(PipelineConfig::one_nn(mask)).unwrap();
    p.run(&synthetic_scene(1, 48, 48).image).unwrap();
}

#[test]
fn nomask_channel_reproduces_face_scores() {
    let face = face();
    let mask = extend_class_head(&face, DEFAULT_EPSILON).unwrap();
    let (fd, md) = (Detector::new(face).unwrap(), Detector::new(mask).unwrap());
    for s in 0..5 {
        let img = synthetic_scene(700 + s, 48, 48).image;
        let f = fd.scores(&img).unwrap();
        let m = md.scores(&img).unwrap();
        assert_eq!(m.len(), 2 * f.len());
        for (pair, &face_score) in m.chunks(2).zip(&f) {
            assert_eq!(pair[1], face_score);
            assert!((pair[0] - face_score).abs() < 1e-4);
        }
    }
}

#[test]
fn zero_epsilon_survives_quantization() {
    let mask = extend_class_head(&face(), 0.0).unwrap();
    let q = quantize_graph(&mask, &calibration_inputs(4)).unwrap();
    let det = Detector::new(q).unwrap();
    for s in 0..5 {
        let scores = det.scores(&synthetic_scene(800 + s, 48, 48).image).unwrap();
        assert!(scores.chunks(2).all(|p| p[0] == p[1]));
    }
}

#[test]
fn epsilon_must_be_finite() {
    for eps in [f32::NAN, f32::INFINITY] {
        assert!(matches!(extend_class_head(&face(), eps), Err(ModelError::Surgery(_))), "{eps}");
    }
}
