//! Command-line flags and the `--config` file overlay.
//!
//! A config file is a JSON object keyed by the long flag names of the chosen
//! subcommand (`{"model": "f.qmdl", "score-threshold": 0.4}`). Flags given on
//! the command line win over the file.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "maskedge", version, about = "Mask detection with integer-only quantized SSD models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Detect masks in one image; JSON-lines on stdout or --output.
    Infer(InferArgs),
    /// COCO mAP over a dataset manifest.
    Eval(EvalArgs),
    /// Per-image latency over a dataset manifest.
    Bench(BenchArgs),
    /// Turn a one-class face detector into a mask/nomask detector.
    Surgery(SurgeryArgs),
    /// Write the seeded fixture models, optionally with synthetic scenes.
    MakeFixture(FixtureArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
pub enum Mode {
    #[value(name = "1nn")]
    #[serde(rename = "1nn")]
    OneNn,
    #[value(name = "2nn")]
    #[serde(rename = "2nn")]
    TwoNn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Table,
}

/// Model selection and post-processing, shared by infer, eval and bench.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default)]
pub struct PipelineArgs {
    /// 1nn: one mask detector; 2nn: face detector then classifier.
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    /// Mask detector (1nn) or face detector (2nn), QMDL.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Mask/nomask classifier, QMDL (2nn only).
    #[arg(long)]
    pub classifier: Option<PathBuf>,
    #[arg(long)]
    pub score_threshold: Option<f32>,
    /// NMS IoU threshold.
    #[arg(long)]
    pub iou_threshold: Option<f64>,
    #[arg(long)]
    pub max_detections: Option<usize>,
    /// 2nn: minimum face score to classify.
    #[arg(long)]
    pub face_threshold: Option<f32>,
    /// 2nn: crop margin as a fraction of the face box.
    #[arg(long)]
    pub crop_margin: Option<f32>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default)]
pub struct InferArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub pipeline: PipelineArgs,
    #[arg(long)]
    pub image: Option<PathBuf>,
    /// JSON-lines destination (default stdout).
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Also write the image with boxes drawn, as PNG.
    #[arg(long)]
    pub annotate: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default)]
pub struct EvalArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub pipeline: PipelineArgs,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Worker threads: 0 = all cores, 1 = sequential.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Report destination (default stdout).
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default)]
pub struct BenchArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub pipeline: PipelineArgs,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Passes over the manifest (default 3).
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default)]
pub struct SurgeryArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// One-class face detector, QMDL.
    #[arg(long = "in")]
    #[serde(rename = "in")]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Added to every copied mask weight (default 1e-7).
    #[arg(long)]
    pub epsilon: Option<f32>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default)]
pub struct FixtureArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Fixture seed (default 1).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write this many synthetic scenes and a manifest under scenes/.
    #[arg(long)]
    pub scenes: Option<usize>,
    /// Side length of the synthetic scenes (default 64).
    #[arg(long)]
    pub scene_size: Option<usize>,
}

/// Overlays the flags given on the command line onto `config`'s contents.
pub fn with_config<T>(cli: T, config: Option<&Path>) -> Result<T, CliError>
where
    T: Serialize + DeserializeOwned + Default,
{
    let Some(path) = config else {
        return Ok(cli);
    };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let invalid = |msg: String| CliError::Validation(format!("{}: {msg}", path.display()));
    let mut merged: Map<String, Value> = match serde_json::from_str(&text) {
        Ok(Value::Object(m)) => m,
        Ok(_) => return Err(invalid("config must be a JSON object".into())),
        Err(e) => return Err(invalid(e.to_string())),
    };
    let known = to_object(&T::default())?;
    if let Some(key) = merged.keys().find(|k| !known.contains_key(*k)) {
        return Err(invalid(format!("unknown key {key:?}")));
    }
    for (k, v) in to_object(&cli)? {
        if !v.is_null() {
            merged.insert(k, v);
        }
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| invalid(e.to_string()))
}

fn to_object<T: Serialize>(v: &T) -> Result<Map<String, Value>, CliError> {
    match serde_json::to_value(v) {
        Ok(Value::Object(m)) => Ok(m),
        _ => Err(CliError::Validation("flags do not serialize to an object".into())),
    }
}

pub fn required<T>(value: Option<T>, flag: &str) -> Result<T, CliError> {
    value.ok_or_else(|| CliError::Validation(format!("missing required flag --{flag}")))
}
