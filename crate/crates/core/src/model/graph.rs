use std::collections::{BTreeMap, HashMap};

use super::ModelError;
use crate::nnops::{Activation, ConvGeometry, ConvSpec, Padding};
use crate::postproc::AnchorConfig;
use crate::qtensor::{FTensor, QTensor, QuantParams};

pub const KEY_KIND: &str = "model.kind";
pub const KEY_INPUT: &str = "model.input";
pub const KEY_INPUT_SIZE: &str = "model.input_size";
pub const KEY_CLASSES: &str = "model.classes";
pub const KEY_BOX_OUTPUTS: &str = "model.box_outputs";
pub const KEY_CLASS_OUTPUTS: &str = "model.class_outputs";
pub const KEY_LOGITS: &str = "model.logits";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    U8,
    I32,
    F32,
}

impl DType {
    pub fn code(self) -> u8 {
        match self {
            DType::U8 => 0,
            DType::I32 => 1,
            DType::F32 => 2,
        }
    }

    pub fn from_code(code: u8) -> Result<Self, ModelError> {
        match code {
            0 => Ok(DType::U8),
            1 => Ok(DType::I32),
            2 => Ok(DType::F32),
            c => Err(ModelError::UnknownDType(c)),
        }
    }

    pub fn size(self) -> usize {
        match self {
            DType::U8 => 1,
            DType::I32 | DType::F32 => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    U8(Vec<u8>),
    I32(Vec<i32>),
    F32(Vec<f32>),
}

impl TensorData {
    pub fn dtype(&self) -> DType {
        match self {
            TensorData::U8(_) => DType::U8,
            TensorData::I32(_) => DType::I32,
            TensorData::F32(_) => DType::F32,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TensorData::U8(v) => v.len(),
            TensorData::I32(v) => v.len(),
            TensorData::F32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A named tensor: a constant (weights, biases) when `data` is present,
/// otherwise an activation produced at run time (or the graph input).
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub dtype: DType,
    pub shape: Vec<usize>,
    pub qparams: Option<QuantParams>,
    pub data: Option<TensorData>,
}

impl Tensor {
    pub fn is_constant(&self) -> bool {
        self.data.is_some()
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn as_f32(&self) -> Option<FTensor> {
        match &self.data {
            Some(TensorData::F32(v)) => FTensor::new(self.shape.clone(), v.clone()).ok(),
            _ => None,
        }
    }

    pub fn as_u8(&self) -> Option<QTensor> {
        match (&self.data, self.qparams) {
            (Some(TensorData::U8(v)), Some(qp)) => QTensor::new(self.shape.clone(), v.clone(), qp).ok(),
            _ => None,
        }
    }

    pub fn f32_data(&self) -> Option<&[f32]> {
        match &self.data {
            Some(TensorData::F32(v)) => Some(v),
            _ => None,
        }
    }

    pub fn i32_data(&self) -> Option<&[i32]> {
        match &self.data {
            Some(TensorData::I32(v)) => Some(v),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpCode {
    Conv2d,
    DepthwiseConv2d,
    Add,
    AvgPool2d,
    Flatten,
    Dense,
}

impl OpCode {
    pub fn code(self) -> u16 {
        match self {
            OpCode::Conv2d => 1,
            OpCode::DepthwiseConv2d => 2,
            OpCode::Add => 3,
            OpCode::AvgPool2d => 4,
            OpCode::Flatten => 5,
            OpCode::Dense => 6,
        }
    }

    pub fn from_code(code: u16) -> Result<Self, ModelError> {
        Ok(match code {
            1 => OpCode::Conv2d,
            2 => OpCode::DepthwiseConv2d,
            3 => OpCode::Add,
            4 => OpCode::AvgPool2d,
            5 => OpCode::Flatten,
            6 => OpCode::Dense,
            c => return Err(ModelError::UnknownOpcode(c)),
        })
    }

    /// (inputs, outputs)
    fn arity(self) -> (usize, usize) {
        match self {
            OpCode::Conv2d | OpCode::DepthwiseConv2d | OpCode::Dense => (3, 1),
            OpCode::Add => (2, 1),
            OpCode::AvgPool2d | OpCode::Flatten => (1, 1),
        }
    }
}

/// Fixed attribute record shared by every op; unused fields are zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OpAttrs {
    pub kernel: (u8, u8),
    pub stride: (u8, u8),
    pub padding: Padding,
    pub activation: Activation,
    pub depth_multiplier: u8,
}

impl Default for OpAttrs {
    fn default() -> Self {
        Self {
            kernel: (0, 0),
            stride: (0, 0),
            padding: Padding::Same,
            activation: Activation::None,
            depth_multiplier: 0,
        }
    }
}

impl OpAttrs {
    pub fn conv(spec: &ConvSpec, depth_multiplier: usize) -> Self {
        Self {
            kernel: (spec.kernel.0 as u8, spec.kernel.1 as u8),
            stride: (spec.stride.0 as u8, spec.stride.1 as u8),
            padding: spec.padding,
            activation: spec.activation,
            depth_multiplier: if spec.depthwise { depth_multiplier as u8 } else { 0 },
        }
    }

    pub fn activation(activation: Activation) -> Self {
        Self {
            activation,
            ..Self::default()
        }
    }

    pub fn conv_spec(&self, depthwise: bool) -> ConvSpec {
        ConvSpec {
            kernel: (usize::from(self.kernel.0), usize::from(self.kernel.1)),
            stride: (usize::from(self.stride.0), usize::from(self.stride.1)),
            padding: self.padding,
            depthwise,
            activation: self.activation,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Op {
    pub code: OpCode,
    pub inputs: Vec<usize>,
    pub outputs: Vec<usize>,
    pub attrs: OpAttrs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Detector,
    Classifier,
}

#[derive(Debug, Clone, PartialEq)]
struct Signature {
    kind: ModelKind,
    input: usize,
    input_size: (usize, usize),
    classes: Vec<String>,
    box_outputs: Vec<usize>,
    class_outputs: Vec<usize>,
    logits: Option<usize>,
    anchors: Option<AnchorConfig>,
    quantized: bool,
}

/// Validated, immutable model: metadata, tensor table and ordered ops.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGraph {
    metadata: BTreeMap<String, String>,
    tensors: Vec<Tensor>,
    ops: Vec<Op>,
    sig: Signature,
}

impl ModelGraph {
    pub fn new(metadata: BTreeMap<String, String>, tensors: Vec<Tensor>, ops: Vec<Op>) -> Result<Self, ModelError> {
        let sig = validate(&metadata, &tensors, &ops)?;
        Ok(Self {
            metadata,
            tensors,
            ops,
            sig,
        })
    }

    pub fn into_parts(self) -> (BTreeMap<String, String>, Vec<Tensor>, Vec<Op>) {
        (self.metadata, self.tensors, self.ops)
    }

    pub fn metadata(&self) -> &BTreeMap<String, String> {
        &self.metadata
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensor(&self, index: usize) -> &Tensor {
        &self.tensors[index]
    }

    pub fn find(&self, name: &str) -> Option<usize> {
        self.tensors.iter().position(|t| t.name == name)
    }

    pub fn ops(&self) -> &[Op] {
        &self.ops
    }

    pub fn kind(&self) -> ModelKind {
        self.sig.kind
    }

    pub fn input_index(&self) -> usize {
        self.sig.input
    }

    /// (height, width) of the image input.
    pub fn input_size(&self) -> (usize, usize) {
        self.sig.input_size
    }

    pub fn input_qparams(&self) -> Option<QuantParams> {
        self.tensors[self.sig.input].qparams
    }

    pub fn class_names(&self) -> &[String] {
        &self.sig.classes
    }

    pub fn num_classes(&self) -> usize {
        self.sig.classes.len()
    }

    pub fn box_outputs(&self) -> &[usize] {
        &self.sig.box_outputs
    }

    pub fn class_outputs(&self) -> &[usize] {
        &self.sig.class_outputs
    }

    pub fn logits_output(&self) -> Option<usize> {
        self.sig.logits
    }

    pub fn anchor_config(&self) -> Option<&AnchorConfig> {
        self.sig.anchors.as_ref()
    }

    pub fn is_quantized(&self) -> bool {
        self.sig.quantized
    }

    /// Index of the op producing tensor `index`, if any.
    pub fn producer(&self, index: usize) -> Option<usize> {
        self.ops.iter().position(|op| op.outputs.contains(&index))
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.iter().filter(|t| t.is_constant()).map(Tensor::numel).sum()
    }
}

fn meta<'a>(metadata: &'a BTreeMap<String, String>, key: &str) -> Result<&'a str, ModelError> {
    metadata
        .get(key)
        .map(String::as_str)
        .ok_or_else(|| ModelError::Metadata(format!("missing key {key}")))
}

fn names(s: &str) -> Vec<&str> {
    s.split(',').map(str::trim).filter(|s| !s.is_empty()).collect()
}

fn validate(metadata: &BTreeMap<String, String>, tensors: &[Tensor], ops: &[Op]) -> Result<Signature, ModelError> {
    let mut by_name: HashMap<&str, usize> = HashMap::new();
    for (i, t) in tensors.iter().enumerate() {
        if by_name.insert(&t.name, i).is_some() {
            return Err(ModelError::InvalidGraph(format!("duplicate tensor name {:?}", t.name)));
        }
        validate_tensor(t)?;
    }

    let input_name = meta(metadata, KEY_INPUT)?;
    let input = *by_name
        .get(input_name)
        .ok_or_else(|| ModelError::Metadata(format!("input tensor {input_name:?} not in tensor table")))?;
    let input_t = &tensors[input];
    if input_t.is_constant() {
        return Err(ModelError::InvalidGraph(format!("input {input_name:?} is a constant")));
    }
    let quantized = match input_t.dtype {
        DType::U8 => true,
        DType::F32 => false,
        DType::I32 => return Err(ModelError::InvalidGraph("input tensor cannot be i32".into())),
    };
    let &[1, in_h, in_w, 3] = input_t.shape.as_slice() else {
        return Err(ModelError::InvalidGraph(format!(
            "input must be 1 x H x W x 3, got {:?}",
            input_t.shape
        )));
    };
    let size_str = meta(metadata, KEY_INPUT_SIZE)?;
    let declared = size_str
        .split_once('x')
        .and_then(|(h, w)| Some((h.parse::<usize>().ok()?, w.parse::<usize>().ok()?)))
        .ok_or_else(|| ModelError::Metadata(format!("{KEY_INPUT_SIZE}: expected <h>x<w>, got {size_str:?}")))?;
    if declared != (in_h, in_w) {
        return Err(ModelError::Metadata(format!(
            "{KEY_INPUT_SIZE} {size_str} disagrees with input shape {:?}",
            input_t.shape
        )));
    }

    // Topological order: each activation is defined once, before use.
    let mut defined = vec![false; tensors.len()];
    defined[input] = true;
    for (oi, op) in ops.iter().enumerate() {
        let (n_in, n_out) = op.code.arity();
        if op.inputs.len() != n_in || op.outputs.len() != n_out {
            return Err(ModelError::InvalidAttribute {
                op: oi,
                detail: format!(
                    "{:?} takes {n_in} inputs and {n_out} outputs, got {} and {}",
                    op.code,
                    op.inputs.len(),
                    op.outputs.len()
                ),
            });
        }
        for &i in &op.inputs {
            if i >= tensors.len() || !(tensors[i].is_constant() || defined[i]) {
                return Err(ModelError::DanglingTensor { op: oi, index: i });
            }
        }
        for &o in &op.outputs {
            if o >= tensors.len() {
                return Err(ModelError::DanglingTensor { op: oi, index: o });
            }
            if tensors[o].is_constant() || defined[o] {
                return Err(ModelError::InvalidGraph(format!(
                    "op {oi} writes tensor {:?}, which is a constant or already defined",
                    tensors[o].name
                )));
            }
            defined[o] = true;
        }
        validate_op(oi, op, tensors, quantized)?;
    }
    let produced_inputs = (0..tensors.len())
        .filter(|&i| !tensors[i].is_constant() && !defined[i])
        .map(|i| tensors[i].name.clone())
        .collect::<Vec<_>>();
    if !produced_inputs.is_empty() {
        return Err(ModelError::InvalidGraph(format!(
            "activations never produced (a graph has exactly one input): {produced_inputs:?}"
        )));
    }

    let classes: Vec<String> = names(meta(metadata, KEY_CLASSES)?).into_iter().map(String::from).collect();
    if classes.is_empty() {
        return Err(ModelError::Metadata(format!("{KEY_CLASSES} is empty")));
    }
    let resolve = |key: &str| -> Result<Vec<usize>, ModelError> {
        names(meta(metadata, key)?)
            .into_iter()
            .map(|n| {
                by_name
                    .get(n)
                    .copied()
                    .filter(|&i| defined[i] && i != input)
                    .ok_or_else(|| ModelError::Metadata(format!("{key}: {n:?} is not an op output")))
            })
            .collect()
    };

    let kind = match meta(metadata, KEY_KIND)? {
        "detector" => ModelKind::Detector,
        "classifier" => ModelKind::Classifier,
        other => return Err(ModelError::Metadata(format!("unknown {KEY_KIND} {other:?}"))),
    };
    let mut sig = Signature {
        kind,
        input,
        input_size: (in_h, in_w),
        classes,
        box_outputs: Vec::new(),
        class_outputs: Vec::new(),
        logits: None,
        anchors: None,
        quantized,
    };
    match kind {
        ModelKind::Detector => {
            let anchors = AnchorConfig::from_metadata(metadata)?;
            let boxes = resolve(KEY_BOX_OUTPUTS)?;
            let classes = resolve(KEY_CLASS_OUTPUTS)?;
            if boxes.len() != anchors.feature_maps.len() || classes.len() != anchors.feature_maps.len() {
                return Err(ModelError::InvalidGraph(format!(
                    "{} feature maps need as many box and class outputs, got {} and {}",
                    anchors.feature_maps.len(),
                    boxes.len(),
                    classes.len()
                )));
            }
            for (fm, (&b, &c)) in anchors.feature_maps.iter().zip(boxes.iter().zip(&classes)) {
                let a = fm.anchors_per_location();
                let want_b = [1, fm.grid_h, fm.grid_w, a * 4];
                let want_c = [1, fm.grid_h, fm.grid_w, a * sig.classes.len()];
                if tensors[b].shape != want_b || tensors[c].shape != want_c {
                    return Err(ModelError::InvalidGraph(format!(
                        "head outputs {:?} / {:?} do not match anchor grid (expected {want_b:?} / {want_c:?})",
                        tensors[b].shape, tensors[c].shape
                    )));
                }
            }
            sig.box_outputs = boxes;
            sig.class_outputs = classes;
            sig.anchors = Some(anchors);
        }
        ModelKind::Classifier => {
            let logits = resolve(KEY_LOGITS)?;
            let &[l] = logits.as_slice() else {
                return Err(ModelError::Metadata(format!("{KEY_LOGITS} must name one tensor")));
            };
            if tensors[l].shape != [1, sig.classes.len()] {
                return Err(ModelError::InvalidGraph(format!(
                    "logits shape {:?} does not match {} classes",
                    tensors[l].shape,
                    sig.classes.len()
                )));
            }
            sig.logits = Some(l);
        }
    }
    Ok(sig)
}

fn validate_tensor(t: &Tensor) -> Result<(), ModelError> {
    let bad = |detail: String| ModelError::InvalidTensor {
        tensor: t.name.clone(),
        detail,
    };
    if t.shape.is_empty() || t.shape.contains(&0) {
        return Err(bad(format!("shape {:?} must be non-empty with positive dims", t.shape)));
    }
    if let Some(data) = &t.data {
        if data.dtype() != t.dtype {
            return Err(bad(format!("declared {:?} but holds {:?}", t.dtype, data.dtype())));
        }
        if data.len() != t.numel() {
            return Err(bad(format!("shape {:?} needs {} elements, has {}", t.shape, t.numel(), data.len())));
        }
        if let TensorData::F32(v) = data {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(bad("non-finite weight".into()));
            }
        }
    }
    let qp_err = |detail: &str| ModelError::InvalidQuantParams {
        tensor: t.name.clone(),
        detail: detail.to_string(),
    };
    match (t.dtype, t.qparams) {
        (DType::U8, None) => return Err(qp_err("u8 tensors need a scale and zero point")),
        (DType::I32, None) => return Err(qp_err("i32 tensors need a scale")),
        (DType::I32, Some(qp)) if qp.zero_point() != 0 => return Err(qp_err("i32 bias zero point must be 0")),
        (DType::F32, Some(_)) => return Err(qp_err("f32 tensors carry no quantization")),
        _ => {}
    }
    Ok(())
}

/// Expected output shape of an op, given its operand shapes.
fn infer_shape(op: &Op, tensors: &[Tensor]) -> Result<Vec<usize>, String> {
    let shape = |i: usize| tensors[op.inputs[i]].shape.as_slice();
    match op.code {
        OpCode::Conv2d | OpCode::DepthwiseConv2d => {
            let depthwise = op.code == OpCode::DepthwiseConv2d;
            let spec = op.attrs.conv_spec(depthwise);
            let g = ConvGeometry::new(shape(0), shape(1), &spec).map_err(|e| e.to_string())?;
            if depthwise && usize::from(op.attrs.depth_multiplier) != g.depth_multiplier {
                return Err(format!(
                    "depth multiplier attribute {} but weights imply {}",
                    op.attrs.depth_multiplier, g.depth_multiplier
                ));
            }
            if shape(2) != [g.out_c] {
                return Err(format!("bias shape {:?} for {} output channels", shape(2), g.out_c));
            }
            Ok(g.output_shape())
        }
        OpCode::Add => {
            if shape(0) != shape(1) {
                return Err(format!("operands {:?} and {:?}", shape(0), shape(1)));
            }
            Ok(shape(0).to_vec())
        }
        OpCode::AvgPool2d => match shape(0) {
            &[n, _, _, c] => Ok(vec![n, 1, 1, c]),
            s => Err(format!("input {s:?} is not 4-D")),
        },
        OpCode::Flatten => {
            let s = shape(0);
            Ok(vec![s[0], s[1..].iter().product::<usize>().max(1)])
        }
        OpCode::Dense => {
            let s = shape(0);
            let features: usize = s[1..].iter().product::<usize>().max(1);
            match shape(1) {
                &[units, f] if f == features && shape(2) == [units] => Ok(vec![s[0], units]),
                w => Err(format!("weights {w:?} / bias {:?} vs {features} features", shape(2))),
            }
        }
    }
}

fn validate_op(oi: usize, op: &Op, tensors: &[Tensor], quantized: bool) -> Result<(), ModelError> {
    let mismatch = |detail: String| ModelError::ShapeMismatch {
        op: oi,
        code: op.code,
        detail,
    };
    let out = &tensors[op.outputs[0]];
    match op.code {
        OpCode::Conv2d | OpCode::DepthwiseConv2d => {
            let a = op.attrs;
            if a.kernel.0 == 0 || a.kernel.1 == 0 || a.stride.0 == 0 || a.stride.1 == 0 {
                return Err(ModelError::InvalidAttribute {
                    op: oi,
                    detail: "kernel and stride must be positive".into(),
                });
            }
        }
        _ => {}
    }
    for (slot, &i) in op.inputs.iter().enumerate() {
        let t = &tensors[i];
        let is_weight = matches!(op.code, OpCode::Conv2d | OpCode::DepthwiseConv2d | OpCode::Dense) && slot > 0;
        if is_weight != t.is_constant() {
            return Err(mismatch(format!(
                "input {slot} ({:?}) must be {}",
                t.name,
                if is_weight { "a constant" } else { "an activation" }
            )));
        }
        let want = match (quantized, is_weight && slot == 2) {
            (false, _) => DType::F32,
            (true, true) => DType::I32,
            (true, false) => DType::U8,
        };
        if t.dtype != want {
            return Err(mismatch(format!("input {:?} is {:?}, expected {want:?}", t.name, t.dtype)));
        }
    }
    let want_out = if quantized { DType::U8 } else { DType::F32 };
    if out.dtype != want_out {
        return Err(mismatch(format!("output {:?} is {:?}, expected {want_out:?}", out.name, out.dtype)));
    }
    let expected = infer_shape(op, tensors).map_err(mismatch)?;
    if out.shape != expected {
        return Err(mismatch(format!("output {:?} declared {:?}, computed {expected:?}", out.name, out.shape)));
    }
    if quantized {
        let qp = |i: usize| tensors[op.inputs[i]].qparams.expect("validated");
        match op.code {
            OpCode::Conv2d | OpCode::DepthwiseConv2d | OpCode::Dense => {
                let want = qp(0).scale() * qp(1).scale();
                let got = qp(2).scale();
                if ((got - want) / want).abs() > 1e-9 {
                    return Err(ModelError::InvalidQuantParams {
                        tensor: tensors[op.inputs[2]].name.clone(),
                        detail: format!("bias scale {got} must equal input scale x weight scale = {want}"),
                    });
                }
            }
            OpCode::Flatten
                if out.qparams != Some(qp(0)) => {
                    return Err(ModelError::InvalidQuantParams {
                        tensor: out.name.clone(),
                        detail: "flatten must preserve quantization".into(),
                    });
                }
            _ => {}
        }
    }
    Ok(())
}

/// Incremental construction of a [`ModelGraph`]; shapes of op outputs are
/// inferred as ops are added.
#[derive(Debug, Default)]
pub struct GraphBuilder {
    metadata: BTreeMap<String, String>,
    tensors: Vec<Tensor>,
    ops: Vec<Op>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn meta(&mut self, key: impl Into<String>, value: impl Into<String>) -> &mut Self {
        self.metadata.insert(key.into(), value.into());
        self
    }

    pub fn tensor(&mut self, t: Tensor) -> usize {
        self.tensors.push(t);
        self.tensors.len() - 1
    }

    pub fn input(&mut self, name: &str, dtype: DType, shape: Vec<usize>, qparams: Option<QuantParams>) -> usize {
        self.metadata.insert(KEY_INPUT.into(), name.into());
        self.metadata
            .insert(KEY_INPUT_SIZE.into(), format!("{}x{}", shape[1], shape[2]));
        self.tensor(Tensor {
            name: name.into(),
            dtype,
            shape,
            qparams,
            data: None,
        })
    }

    pub fn constant(&mut self, name: &str, shape: Vec<usize>, data: TensorData, qparams: Option<QuantParams>) -> usize {
        self.tensor(Tensor {
            name: name.into(),
            dtype: data.dtype(),
            shape,
            qparams,
            data: Some(data),
        })
    }

    pub fn shape_of(&self, index: usize) -> &[usize] {
        &self.tensors[index].shape
    }

    /// Appends an op whose single output is a new activation named `out`.
    pub fn op(
        &mut self,
        code: OpCode,
        inputs: Vec<usize>,
        attrs: OpAttrs,
        out: &str,
        out_qparams: Option<QuantParams>,
    ) -> Result<usize, ModelError> {
        let mut op = Op {
            code,
            inputs,
            outputs: Vec::new(),
            attrs,
        };
        let shape = infer_shape(&op, &self.tensors).map_err(|detail| ModelError::ShapeMismatch {
            op: self.ops.len(),
            code,
            detail,
        })?;
        let dtype = if out_qparams.is_some() { DType::U8 } else { DType::F32 };
        let idx = self.tensor(Tensor {
            name: out.into(),
            dtype,
            shape,
            qparams: out_qparams,
            data: None,
        });
        op.outputs.push(idx);
        self.ops.push(op);
        Ok(idx)
    }

    pub fn finish(self) -> Result<ModelGraph, ModelError> {
        ModelGraph::new(self.metadata, self.tensors, self.ops)
    }
}
