use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use maskedge::engine::TensorValue;
use maskedge::model::{build_fixture, build_fixture_model, FixtureKind};
use maskedge::pipeline::{preprocess_float, preprocess_quant, synthetic_scene};
use maskedge::{Engine, Image, Pipeline, PipelineConfig};

fn images() -> Vec<Image> {
    (0..8).map(|s| synthetic_scene(3000 + s, 64, 64).image).collect()
}

fn data_type(quantized: bool) -> &'static str {
    if quantized {
        "8-bit"
    } else {
        "float"
    }
}

/// Network only: a prepared input tensor through the engine.
fn engine(c: &mut Criterion) {
    let mut group = c.benchmark_group("engine");
    let img = &images()[0];
    for quantized in [false, true] {
        let g = build_fixture_model(1, quantized);
        let input = match g.input_qparams() {
            Some(qp) => TensorValue::U8(preprocess_quant(img, g.input_size(), qp).unwrap()),
            None => TensorValue::F32(preprocess_float(img, g.input_size()).unwrap()),
        };
        let e = Engine::new(g).unwrap();
        group.bench_function(data_type(quantized), |b| b.iter(|| e.run(black_box(input.clone())).unwrap()));
    }
    group.finish();
}

/// Whole pipeline per image, the latency protocol's timing boundary.
fn pipeline(c: &mut Criterion) {
    let imgs = images();
    let mut group = c.benchmark_group("pipeline");
    for quantized in [false, true] {
        let one = Pipeline::new(PipelineConfig::one_nn(build_fixture_model(1, quantized))).unwrap();
        let mut cfg = PipelineConfig::two_nn(
            build_fixture(FixtureKind::FaceDetector, 3, quantized),
            build_fixture(FixtureKind::Classifier, 3, quantized),
        );
        cfg.face_threshold = 0.3;
        let two = Pipeline::new(cfg).unwrap();
        for (name, p) in [("1NN", &one), ("2NN", &two)] {
            group.bench_with_input(BenchmarkId::new(name, data_type(quantized)), &imgs, |b, imgs| {
                b.iter(|| {
                    for img in imgs {
                        black_box(p.run(img).unwrap());
                    }
                })
            });
        }
    }
    group.finish();
}

criterion_group!(benches, engine, pipeline);
criterion_main!(benches);
