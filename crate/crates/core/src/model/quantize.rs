//! Post-training quantization of a float graph.
//!
//! Weights get per-tensor asymmetric qparams from their exact min/max (range
//! widened to include zero). Activations, the graph input included, get
//! qparams from the min/max seen over a calibration batch. Biases become
//! i32 at scale `s_in * s_w`. Pooling and flattening keep their input's
//! qparams so they need no requantization.

use std::collections::HashMap;

use super::graph::{DType, ModelGraph, OpCode, Tensor, TensorData};
use super::ModelError;
use crate::engine::{Engine, TensorValue};
use crate::nnops::quant::quantize_bias;
use crate::qtensor::{FTensor, QTensor, QuantParams};

/// Output scales are widened, if needed, so every conv/dense requantization
/// multiplier stays strictly below one.
const MAX_MULTIPLIER: f64 = 0.999;

pub fn quantize_graph(float: &ModelGraph, calibration: &[FTensor]) -> Result<ModelGraph, ModelError> {
    if float.is_quantized() {
        return Err(ModelError::InvalidGraph("graph is already quantized".into()));
    }
    if calibration.is_empty() {
        return Err(ModelError::InvalidGraph("calibration batch is empty".into()));
    }
    let engine = Engine::new(float.clone())?;
    let mut ranges: HashMap<usize, (f32, f32)> = HashMap::new();
    for x in calibration {
        let acts = engine.run(TensorValue::F32(x.clone())).map_err(|e| match e {
            crate::engine::EngineError::Model(m) => m,
            other => ModelError::InvalidGraph(format!("calibration run failed: {other}")),
        })?;
        for (i, v) in acts.iter() {
            let (lo, hi) = v.as_f32().expect("float run").min_max();
            let r = ranges.entry(i).or_insert((lo, hi));
            r.0 = r.0.min(lo);
            r.1 = r.1.max(hi);
        }
    }

    let (metadata, tensors, ops) = float.clone().into_parts();
    let mut qparams: Vec<Option<QuantParams>> = vec![None; tensors.len()];
    let range_qp = |i: usize| -> Result<QuantParams, ModelError> {
        let (lo, hi) = ranges[&i];
        Ok(QuantParams::from_min_max(lo, hi)?)
    };
    qparams[float.input_index()] = Some(range_qp(float.input_index())?);

    let mut out: Vec<Tensor> = tensors.clone();
    for op in &ops {
        let in_qp = qparams[op.inputs[0]].expect("inputs quantized in op order");
        let o = op.outputs[0];
        match op.code {
            OpCode::Conv2d | OpCode::DepthwiseConv2d | OpCode::Dense => {
                let (wi, bi) = (op.inputs[1], op.inputs[2]);
                let w = tensors[wi].as_f32().expect("validated float weights");
                let (lo, hi) = w.min_max();
                let w_qp = QuantParams::from_min_max(lo, hi)?;
                let qw = QTensor::quantize_from(&w, w_qp);
                let bias = tensors[bi].f32_data().expect("validated float bias");
                let b_scale = in_qp.scale() * w_qp.scale();
                out[wi] = Tensor {
                    dtype: DType::U8,
                    qparams: Some(w_qp),
                    data: Some(TensorData::U8(qw.into_data())),
                    ..tensors[wi].clone()
                };
                out[bi] = Tensor {
                    dtype: DType::I32,
                    qparams: Some(QuantParams::new(b_scale, 0)?),
                    data: Some(TensorData::I32(quantize_bias(bias, in_qp.scale(), w_qp.scale()))),
                    ..tensors[bi].clone()
                };
                let mut o_qp = range_qp(o)?;
                if b_scale / o_qp.scale() >= MAX_MULTIPLIER {
                    let (lo, _) = ranges[&o];
                    let scale = b_scale / MAX_MULTIPLIER;
                    let zp = (f64::from(-lo.min(0.0)) / scale).round().clamp(0.0, 255.0) as i32;
                    log::debug!("widening output scale of {:?} to keep its multiplier below 1", tensors[o].name);
                    o_qp = QuantParams::new(scale, zp)?;
                }
                qparams[o] = Some(o_qp);
            }
            OpCode::Add => qparams[o] = Some(range_qp(o)?),
            OpCode::AvgPool2d | OpCode::Flatten => qparams[o] = Some(in_qp),
        }
    }
    for (t, qp) in out.iter_mut().zip(&qparams) {
        if !t.is_constant() {
            t.dtype = DType::U8;
            t.qparams = Some(qp.expect("every activation is produced"));
        }
    }
    ModelGraph::new(metadata, out, ops)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_fixture_model, calibration_inputs};

    #[test]
    fn structure_preserved() {
        let f = build_fixture_model(1, false);
        let q = quantize_graph(&f, &calibration_inputs(1)).unwrap();
        assert!(q.is_quantized());
        assert_eq!(q.ops(), f.ops());
        assert_eq!(q.tensors().len(), f.tensors().len());
        for (a, b) in f.tensors().iter().zip(q.tensors()) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.shape, b.shape);
        }
        assert_eq!(q.metadata(), f.metadata());
    }

    #[test]
    fn rejects_quantized_or_empty() {
        let q = build_fixture_model(1, true);
        assert!(quantize_graph(&q, &calibration_inputs(1)).is_err());
        assert!(quantize_graph(&build_fixture_model(1, false), &[]).is_err());
    }

    #[test]
    fn weight_roundtrip_within_half_quantum() {
        let f = build_fixture_model(1, false);
        let q = build_fixture_model(1, true);
        for (a, b) in f.tensors().iter().zip(q.tensors()) {
            if let (Some(w), Some(qw)) = (a.f32_data(), b.as_u8()) {
                let s = qw.qparams().scale();
                for (x, y) in w.iter().zip(qw.dequantize().data()) {
                    assert!(f64::from((x - y).abs()) <= s / 2.0 + 1e-6, "{}", a.name);
                }
            }
        }
    }
}
