//! Graph execution. An [`Engine`] compiles a validated graph once into a
//! plan of prepared kernels; quantized plans run on integer arithmetic only.

use thiserror::Error;

use crate::model::{ModelError, ModelGraph, OpCode};
use crate::nnops::{float, quant, OpError};
use crate::qtensor::{FTensor, QTensor, QuantError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("input mismatch: {0}")]
    Input(String),
    #[error("op {op}: {source}")]
    Op { op: usize, source: OpError },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// A run-time tensor on either path.
#[derive(Debug, Clone, PartialEq)]
pub enum TensorValue {
    F32(FTensor),
    U8(QTensor),
}

impl TensorValue {
    pub fn shape(&self) -> &[usize] {
        match self {
            TensorValue::F32(t) => t.shape(),
            TensorValue::U8(t) => t.shape(),
        }
    }

    pub fn as_f32(&self) -> Option<&FTensor> {
        match self {
            TensorValue::F32(t) => Some(t),
            TensorValue::U8(_) => None,
        }
    }

    pub fn as_u8(&self) -> Option<&QTensor> {
        match self {
            TensorValue::U8(t) => Some(t),
            TensorValue::F32(_) => None,
        }
    }

    /// Real-valued view; dequantizes u8 tensors.
    pub fn to_f32(&self) -> FTensor {
        match self {
            TensorValue::F32(t) => t.clone(),
            TensorValue::U8(t) => t.dequantize(),
        }
    }
}

/// Every activation computed by one run, indexed like the graph's tensor table.
#[derive(Debug, Clone)]
pub struct Activations {
    values: Vec<Option<TensorValue>>,
    names: Vec<String>,
}

impl Activations {
    pub fn get(&self, index: usize) -> Option<&TensorValue> {
        self.values.get(index).and_then(Option::as_ref)
    }

    pub fn by_name(&self, name: &str) -> Option<&TensorValue> {
        self.names.iter().position(|n| n == name).and_then(|i| self.get(i))
    }

    /// (tensor index, value) for every activation, input included.
    pub fn iter(&self) -> impl Iterator<Item = (usize, &TensorValue)> {
        self.values.iter().enumerate().filter_map(|(i, v)| v.as_ref().map(|v| (i, v)))
    }
}

#[derive(Debug, Clone)]
enum FloatStep {
    Conv(float::ConvKernel),
    Add(crate::nnops::Activation),
    AvgPool,
    Flatten,
    Dense {
        weights: FTensor,
        bias: Vec<f32>,
        activation: crate::nnops::Activation,
    },
}

#[derive(Debug, Clone)]
enum QuantStep {
    Conv(quant::ConvKernel),
    Add(quant::AddKernel),
    AvgPool(quant::AvgPoolKernel),
    Flatten,
    Dense(quant::DenseKernel),
}

#[derive(Debug, Clone)]
enum Plan {
    Float(Vec<FloatStep>),
    Quant(Vec<QuantStep>),
}

/// Prepared executor for one model. Immutable and shareable across threads.
#[derive(Debug, Clone)]
pub struct Engine {
    graph: ModelGraph,
    plan: Plan,
}

fn constant_f32(graph: &ModelGraph, index: usize) -> Result<FTensor, ModelError> {
    graph.tensor(index).as_f32().ok_or_else(|| ModelError::InvalidTensor {
        tensor: graph.tensor(index).name.clone(),
        detail: "expected f32 constant".into(),
    })
}

fn constant_u8(graph: &ModelGraph, index: usize) -> Result<QTensor, ModelError> {
    graph.tensor(index).as_u8().ok_or_else(|| ModelError::InvalidTensor {
        tensor: graph.tensor(index).name.clone(),
        detail: "expected u8 constant".into(),
    })
}

fn constant_i32(graph: &ModelGraph, index: usize) -> Result<Vec<i32>, ModelError> {
    graph
        .tensor(index)
        .i32_data()
        .map(<[i32]>::to_vec)
        .ok_or_else(|| ModelError::InvalidTensor {
            tensor: graph.tensor(index).name.clone(),
            detail: "expected i32 constant".into(),
        })
}

impl Engine {
    pub fn new(graph: ModelGraph) -> Result<Self, ModelError> {
        let plan = if graph.is_quantized() {
            Plan::Quant(Self::quant_plan(&graph)?)
        } else {
            Plan::Float(Self::float_plan(&graph)?)
        };
        Ok(Self { graph, plan })
    }

    fn float_plan(g: &ModelGraph) -> Result<Vec<FloatStep>, ModelError> {
        g.ops()
            .iter()
            .map(|op| {
                Ok(match op.code {
                    OpCode::Conv2d | OpCode::DepthwiseConv2d => FloatStep::Conv(
                        float::ConvKernel::new(
                            &constant_f32(g, op.inputs[1])?,
                            constant_f32(g, op.inputs[2])?.data(),
                            op.attrs.conv_spec(op.code == OpCode::DepthwiseConv2d),
                        )
                        .map_err(|e| ModelError::InvalidTensor {
                            tensor: g.tensor(op.inputs[1]).name.clone(),
                            detail: e.to_string(),
                        })?,
                    ),
                    OpCode::Add => FloatStep::Add(op.attrs.activation),
                    OpCode::AvgPool2d => FloatStep::AvgPool,
                    OpCode::Flatten => FloatStep::Flatten,
                    OpCode::Dense => FloatStep::Dense {
                        weights: constant_f32(g, op.inputs[1])?,
                        bias: constant_f32(g, op.inputs[2])?.into_data(),
                        activation: op.attrs.activation,
                    },
                })
            })
            .collect()
    }

    fn quant_plan(g: &ModelGraph) -> Result<Vec<QuantStep>, ModelError> {
        let qp = |i: usize| g.tensor(i).qparams.expect("validated u8 tensor");
        g.ops()
            .iter()
            .map(|op| {
                let out_qp = qp(op.outputs[0]);
                Ok(match op.code {
                    OpCode::Conv2d | OpCode::DepthwiseConv2d => QuantStep::Conv(quant::ConvKernel::new(
                        &constant_u8(g, op.inputs[1])?,
                        &constant_i32(g, op.inputs[2])?,
                        op.attrs.conv_spec(op.code == OpCode::DepthwiseConv2d),
                        qp(op.inputs[0]),
                        out_qp,
                    )?),
                    OpCode::Add => QuantStep::Add(quant::AddKernel::new(
                        qp(op.inputs[0]),
                        qp(op.inputs[1]),
                        out_qp,
                        op.attrs.activation,
                    )?),
                    OpCode::AvgPool2d => QuantStep::AvgPool(quant::AvgPoolKernel::new(qp(op.inputs[0]), out_qp)?),
                    OpCode::Flatten => QuantStep::Flatten,
                    OpCode::Dense => QuantStep::Dense(quant::DenseKernel::new(
                        &constant_u8(g, op.inputs[1])?,
                        &constant_i32(g, op.inputs[2])?,
                        op.attrs.activation,
                        qp(op.inputs[0]),
                        out_qp,
                    )?),
                })
            })
            .collect()
    }

    pub fn graph(&self) -> &ModelGraph {
        &self.graph
    }

    pub fn is_quantized(&self) -> bool {
        matches!(self.plan, Plan::Quant(_))
    }

    /// Runs the graph, keeping every activation.
    pub fn run(&self, input: TensorValue) -> Result<Activations, EngineError> {
        let g = &self.graph;
        let input_t = g.tensor(g.input_index());
        if input.shape() != input_t.shape.as_slice() {
            return Err(EngineError::Input(format!(
                "expected shape {:?}, got {:?}",
                input_t.shape,
                input.shape()
            )));
        }
        let mut values: Vec<Option<TensorValue>> = vec![None; g.tensors().len()];
        match (&self.plan, input) {
            (Plan::Float(steps), TensorValue::F32(x)) => {
                values[g.input_index()] = Some(TensorValue::F32(x));
                for (oi, (step, op)) in steps.iter().zip(g.ops()).enumerate() {
                    let arg = |k: usize| -> &FTensor {
                        values[op.inputs[k]].as_ref().and_then(TensorValue::as_f32).expect("topological order")
                    };
                    let err = |source| EngineError::Op { op: oi, source };
                    let out = match step {
                        FloatStep::Conv(k) => k.run(arg(0)),
                        FloatStep::Add(act) => float::add(arg(0), arg(1), *act),
                        FloatStep::AvgPool => float::avg_pool2d(arg(0)),
                        FloatStep::Flatten => {
                            let shape = g.tensor(op.outputs[0]).shape.clone();
                            arg(0).clone().reshape(shape).map_err(OpError::from)
                        }
                        FloatStep::Dense {
                            weights,
                            bias,
                            activation,
                        } => float::dense(arg(0), weights, bias, *activation),
                    }
                    .map_err(err)?;
                    values[op.outputs[0]] = Some(TensorValue::F32(out));
                }
            }
            (Plan::Quant(steps), TensorValue::U8(x)) => {
                let want = g.input_qparams().expect("quantized input");
                if x.qparams() != want {
                    return Err(EngineError::Input(format!(
                        "input quantization {:?} differs from the model's {want:?}",
                        x.qparams()
                    )));
                }
                values[g.input_index()] = Some(TensorValue::U8(x));
                for (oi, (step, op)) in steps.iter().zip(g.ops()).enumerate() {
                    let arg = |k: usize| -> &QTensor {
                        values[op.inputs[k]].as_ref().and_then(TensorValue::as_u8).expect("topological order")
                    };
                    let err = |source| EngineError::Op { op: oi, source };
                    let out = match step {
                        QuantStep::Conv(k) => k.run(arg(0)),
                        QuantStep::Add(k) => k.run(arg(0), arg(1)),
                        QuantStep::AvgPool(k) => k.run(arg(0)),
                        QuantStep::Flatten => {
                            let shape = g.tensor(op.outputs[0]).shape.clone();
                            arg(0).clone().reshape(shape).map_err(OpError::from)
                        }
                        QuantStep::Dense(k) => k.run(arg(0)),
                    }
                    .map_err(err)?;
                    values[op.outputs[0]] = Some(TensorValue::U8(out));
                }
            }
            (Plan::Float(_), TensorValue::U8(_)) => {
                return Err(EngineError::Input("float model given a quantized input".into()))
            }
            (Plan::Quant(_), TensorValue::F32(_)) => {
                return Err(EngineError::Input("quantized model given a float input".into()))
            }
        }
        Ok(Activations {
            values,
            names: g.tensors().iter().map(|t| t.name.clone()).collect(),
        })
    }
}

impl From<QuantError> for EngineError {
    fn from(e: QuantError) -> Self {
        EngineError::Model(ModelError::Quant(e))
    }
}
