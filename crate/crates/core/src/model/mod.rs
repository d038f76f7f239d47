//! Model graphs: the in-memory representation, the QMDL container format,
//! deterministic fixtures, post-training quantization and class-head surgery.

mod fixture;
mod format;
mod graph;
mod quantize;
mod surgery;

pub use fixture::{
    build_fixture, build_fixture_model, calibration_inputs, fixture_anchor_config, FixtureKind,
    CALIBRATION_IMAGES,
};
pub use format::{load_model, save_model, MAGIC, VERSION};
pub use graph::{DType, GraphBuilder, ModelGraph, ModelKind, Op, OpAttrs, OpCode, Tensor, TensorData};
pub use quantize::quantize_graph;
pub use surgery::{extend_class_head, DEFAULT_EPSILON};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nnops::OpError;
use crate::postproc::PostprocError;
use crate::qtensor::QuantError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("bad magic: expected \"QMDL\", found {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),
    #[error("file truncated in {0}")]
    Truncated(&'static str),
    #[error("{0} trailing bytes after the data section")]
    TrailingBytes(usize),
    #[error("unknown op code {0}")]
    UnknownOpcode(u16),
    #[error("unknown dtype code {0}")]
    UnknownDType(u8),
    #[error("invalid attribute in op {op}: {detail}")]
    InvalidAttribute { op: usize, detail: String },
    #[error("invalid UTF-8 in {0}")]
    InvalidUtf8(&'static str),
    #[error("op {op} references tensor {index}, which does not exist or is not yet defined")]
    DanglingTensor { op: usize, index: usize },
    #[error("tensor {tensor:?} has invalid quantization parameters: {detail}")]
    InvalidQuantParams { tensor: String, detail: String },
    #[error("tensor {tensor:?}: {detail}")]
    InvalidTensor { tensor: String, detail: String },
    #[error("op {op} ({code:?}): {detail}")]
    ShapeMismatch { op: usize, code: OpCode, detail: String },
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("metadata: {0}")]
    Metadata(String),
    #[error("class head surgery: {0}")]
    Surgery(String),
    #[error(transparent)]
    Anchors(#[from] PostprocError),
    #[error(transparent)]
    Op(#[from] OpError),
    #[error(transparent)]
    Quant(#[from] QuantError),
}

/// Class labels of the mask task. Id 0 is background; the detector's class
/// channels and the classifier's logits are ordered mask, nomask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Mask,
    #[serde(rename = "nomask")]
    NoMask,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Mask, Label::NoMask];

    pub fn class_id(self) -> u32 {
        match self {
            Label::Mask => 1,
            Label::NoMask => 2,
        }
    }

    pub fn from_class_id(id: u32) -> Option<Self> {
        match id {
            1 => Some(Label::Mask),
            2 => Some(Label::NoMask),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Mask => "mask",
            Label::NoMask => "nomask",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "mask" => Some(Label::Mask),
            "nomask" => Some(Label::NoMask),
            _ => None,
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}
