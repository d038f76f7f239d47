//! Integer-only quantized inference for MobileNetV2 + SSD mask detection.
//!
//! The crate is layered bottom-up:
//!
//! - [`qtensor`]: affine 8-bit tensors and fixed-point requantization.
//! - [`nnops`]: float reference and integer-only operators.
//! - [`model`]: the QMDL container format, graph validation, seeded fixtures
//!   and class-head weight surgery.
//! - [`engine`]: executes a validated graph on either path.
//! - [`postproc`]: SSD anchors, box decoding and non-maximum suppression.
//! - [`pipeline`]: single-network (1NN) and cascaded (2NN) inference.
//! - [`evalbench`]: COCO-style mAP and the latency protocol.

pub mod audit;
pub mod engine;
pub mod evalbench;
pub mod model;
pub mod nnops;
pub mod par;
pub mod pipeline;
pub mod postproc;
pub mod qtensor;
pub mod rng;

pub use engine::Engine;
pub use model::ModelGraph;
pub use pipeline::{Image, Pipeline, PipelineConfig, PipelineMode};
pub use postproc::{BBox, Detection};
pub use qtensor::{FTensor, FixedPointMultiplier, QTensor, QuantParams};
