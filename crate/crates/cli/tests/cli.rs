use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use maskedge::model::load_model;
use serde_json::Value;

fn maskedge(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_maskedge"))
        .args(args)
        .current_dir(cwd)
        .env_remove("MASKEDGE_LOG")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

/// Fixture models plus 4 synthetic scenes in a fresh directory.
fn fixture_dir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let o = maskedge(&["make-fixture", "--out-dir", "fx", "--scenes", "4", "--scene-size", "48"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    dir
}

const DET: &str = "fx/mask_detector.u8.qmdl";
const MANIFEST: &str = "fx/scenes/manifest.json";
const SCENE: &str = "fx/scenes/scene_0000.png";

#[test]
fn make_fixture_is_deterministic() {
    let a = fixture_dir();
    let b = fixture_dir();
    let summary: Value = serde_json::from_str(&stdout(&maskedge(&["make-fixture", "--out-dir", "again"], a.path()))).unwrap();
    assert_eq!(summary["models"].as_array().unwrap().len(), 6);
    assert!(summary["manifest"].is_null());
    for name in ["mask_detector", "face_detector", "classifier"] {
        for suffix in ["f32", "u8"] {
            let rel = format!("fx/{name}.{suffix}.qmdl");
            let x = std::fs::read(a.path().join(&rel)).unwrap();
            assert_eq!(x, std::fs::read(b.path().join(&rel)).unwrap(), "{rel}");
            assert_eq!(load_model(&x).unwrap().is_quantized(), suffix == "u8");
        }
    }
    assert_eq!(
        std::fs::read(a.path().join(MANIFEST)).unwrap(),
        std::fs::read(b.path().join(MANIFEST)).unwrap()
    );
}

#[test]
fn infer_writes_json_lines_and_png() {
    let dir = fixture_dir();
    let args = ["infer", "--model", DET, "--image", SCENE, "--score-threshold", "0.3"];
    let first = maskedge(&args, dir.path());
    assert!(first.status.success(), "{}", stderr(&first));
    let text = stdout(&first);
    assert!(!text.is_empty());
    let mut last = f64::INFINITY;
    for line in text.lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        let score = v["score"].as_f64().unwrap();
        assert!((0.3..=1.0).contains(&score) && score <= last);
        last = score;
        let label = v["label"].as_str().unwrap();
        assert_eq!(v["class_id"].as_u64().unwrap(), if label == "mask" { 1 } else { 2 });
        assert!(v["ymin"].as_f64() < v["ymax"].as_f64() && v["xmin"].as_f64() < v["xmax"].as_f64());
    }
    assert_eq!(stdout(&maskedge(&args, dir.path())), text);

    let o = maskedge(
        &[&args[..], &["--output", "dets.jsonl", "--annotate", "boxes.png"]].concat(),
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).is_empty());
    assert_eq!(std::fs::read_to_string(dir.path().join("dets.jsonl")).unwrap(), text);
    let png = maskedge::Image::load(&dir.path().join("boxes.png")).unwrap();
    assert_eq!((png.height(), png.width()), (48, 48));
}

#[test]
fn infer_default_threshold_is_half() {
    let dir = fixture_dir();
    let o = maskedge(&["infer", "--model", DET, "--image", SCENE], dir.path());
    for line in stdout(&o).lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        assert!(v["score"].as_f64().unwrap() >= 0.5);
    }
}

#[test]
fn eval_report_and_parallel_agreement() {
    let dir = fixture_dir();
    let run = |jobs: &str| maskedge(&["eval", "--mode", "1nn", "--model", DET, "--manifest", MANIFEST, "--jobs", jobs], dir.path());
    let seq = run("1");
    assert!(seq.status.success(), "{}", stderr(&seq));
    assert_eq!(stdout(&run("3")), stdout(&seq));
    assert_eq!(stdout(&run("0")), stdout(&seq));
    let v: Value = serde_json::from_str(&stdout(&seq)).unwrap();
    let map = v["map"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&map));
    assert_eq!(v["images"], 4);
    assert_eq!(v["iou_thresholds"].as_array().unwrap().len(), 10);
    assert_eq!(v["mode"], "1NN");
    assert_eq!(v["data_type"], "8-bit");
}

#[test]
fn eval_two_nn_and_table() {
    let dir = fixture_dir();
    let o = maskedge(
        &[
            "eval", "--mode", "2nn", "--model", "fx/face_detector.f32.qmdl", "--classifier", "fx/classifier.f32.qmdl",
            "--manifest", MANIFEST, "--format", "table",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.starts_with("| Environment"));
    let row = text.lines().nth(2).unwrap();
    assert!(row.contains("| float") && row.contains("| -") && row.trim_end().ends_with("% |"), "{row}");
}

#[test]
fn eval_skips_unreadable_image_with_io_status() {
    let dir = fixture_dir();
    std::fs::remove_file(dir.path().join("fx/scenes/scene_0002.png")).unwrap();
    let o = maskedge(&["eval", "--model", DET, "--manifest", MANIFEST], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["images"], 3);
    assert_eq!(v["skipped"].as_array().unwrap().len(), 1);
    assert!(stderr(&o).lines().any(|l| l.starts_with("error[io]: 1 of 4 images")));
}

#[test]
fn bench_reports_each_run() {
    let dir = fixture_dir();
    let o = maskedge(&["bench", "--runs", "3", "--model", DET, "--manifest", MANIFEST], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let runs: Vec<f64> = v["per_run_ms"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert_eq!(runs.len(), 3);
    assert!(runs.iter().all(|&r| r > 0.0));
    assert_eq!(v["overall_ms"].as_f64().unwrap(), runs.iter().sum::<f64>() / 3.0);
    assert_eq!((v["runs"].as_u64(), v["images"].as_u64()), (Some(3), Some(4)));

    let zero = maskedge(&["bench", "--runs", "0", "--model", DET, "--manifest", MANIFEST], dir.path());
    assert_eq!(zero.status.code(), Some(1));
}

#[test]
fn surgery_produces_two_class_model() {
    let dir = fixture_dir();
    let o = maskedge(&["surgery", "--epsilon", "1e-7", "--in", "fx/face_detector.f32.qmdl", "--out", "mask.qmdl"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let g = load_model(&std::fs::read(dir.path().join("mask.qmdl")).unwrap()).unwrap();
    assert_eq!(g.num_classes(), 2);
    assert_eq!(g.class_names(), ["mask", "nomask"]);
    let eval = maskedge(&["eval", "--model", "mask.qmdl", "--manifest", MANIFEST], dir.path());
    assert!(eval.status.success(), "{}", stderr(&eval));

    let again = maskedge(&["surgery", "--in", "mask.qmdl", "--out", "x.qmdl"], dir.path());
    assert_eq!(again.status.code(), Some(1));
    assert!(stderr(&again).starts_with("error[validation]:"));
    assert!(!dir.path().join("x.qmdl").exists());
}

#[test]
fn config_file_supplies_flags_and_flags_win() {
    let dir = fixture_dir();
    let cfg = serde_json::json!({"model": DET, "manifest": MANIFEST, "format": "table", "jobs": 1});
    std::fs::write(dir.path().join("eval.json"), cfg.to_string()).unwrap();
    let table = maskedge(&["eval", "--config", "eval.json"], dir.path());
    assert!(table.status.success(), "{}", stderr(&table));
    assert!(stdout(&table).starts_with("| Environment"));

    let json = maskedge(&["eval", "--config", "eval.json", "--format", "json"], dir.path());
    let direct = maskedge(&["eval", "--model", DET, "--manifest", MANIFEST], dir.path());
    assert_eq!(stdout(&json), stdout(&direct));

    let cfg = serde_json::json!({"in": "fx/face_detector.f32.qmdl", "out": "m.qmdl", "epsilon": 0.0});
    std::fs::write(dir.path().join("s.json"), cfg.to_string()).unwrap();
    assert!(maskedge(&["surgery", "--config", "s.json"], dir.path()).status.success());
    assert!(dir.path().join("m.qmdl").exists());
}

#[test]
fn bad_config_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    for (body, needle) in [
        (r#"{"modle": "x"}"#, "unknown key \"modle\""),
        ("[1, 2]", "JSON object"),
        (r#"{"runs": "three"}"#, "invalid type"),
        ("{", "EOF"),
    ] {
        std::fs::write(dir.path().join("c.json"), body).unwrap();
        let o = maskedge(&["bench", "--config", "c.json"], dir.path());
        assert_eq!(o.status.code(), Some(1), "{body}");
        let err = stderr(&o);
        assert!(err.starts_with("error[validation]: c.json:") && err.contains(needle), "{err}");
    }
    let o = maskedge(&["bench", "--config", "missing.json"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    for args in [&["infer", "--bogus"][..], &["frobnicate"], &["eval", "--mode", "3nn"], &["infer", "-m", "x"]] {
        let o = maskedge(args, dir.path());
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        let err = stderr(&o);
        assert!(err.starts_with("error[validation]: "), "{err}");
        assert!(err.contains("--help"), "{err}");
    }
    assert_eq!(maskedge(&["--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn missing_inputs() {
    let dir = fixture_dir();
    let cases: [(&[&str], i32, &str); 6] = [
        (&["infer", "--image", SCENE], 1, "missing required flag --model"),
        (&["infer", "--model", DET], 1, "missing required flag --image"),
        (&["eval", "--mode", "2nn", "--model", "fx/face_detector.u8.qmdl", "--manifest", MANIFEST], 1, "--classifier"),
        (&["infer", "--model", "nope.qmdl", "--image", SCENE], 2, "nope.qmdl"),
        (&["infer", "--model", DET, "--image", "nope.png"], 2, "nope.png"),
        (&["eval", "--model", DET, "--manifest", SCENE], 1, "manifest"),
    ];
    for (args, code, needle) in cases {
        let o = maskedge(args, dir.path());
        assert_eq!(o.status.code(), Some(code), "{args:?}: {}", stderr(&o));
        let err = stderr(&o);
        assert_eq!(err.lines().count(), 1, "{err}");
        let prefix = if code == 1 { "error[validation]: " } else { "error[io]: " };
        assert!(err.starts_with(prefix) && err.contains(needle), "{err}");
    }
}

#[test]
fn wrong_model_kind_is_rejected() {
    let dir = fixture_dir();
    let corrupt: PathBuf = dir.path().join("bad.qmdl");
    std::fs::write(&corrupt, b"QMDL\x09\x00").unwrap();
    for model in ["fx/classifier.u8.qmdl", "fx/face_detector.u8.qmdl", "bad.qmdl"] {
        let o = maskedge(&["infer", "--model", model, "--image", SCENE], dir.path());
        assert_eq!(o.status.code(), Some(1), "{model}");
        assert!(stderr(&o).starts_with("error[validation]:"));
    }
}
