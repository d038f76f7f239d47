//! QMDL container: little-endian, version 1.
//!
//! ```text
//! header     magic "QMDL" | version u16 | flags u16 (0)
//! metadata   count u32 | { key_len u16, key, value_len u32, value }*   (sorted by key)
//! tensors    count u32 | { name_len u16, name, dtype u8, kind u8, rank u8, dims u32*rank,
//!                          scale f64, zero_point i32, offset u64, length u64 }*
//! ops        count u32 | { opcode u16, n_in u8, n_out u8, inputs u32*, outputs u32*,
//!                          attrs [kh, kw, sh, sw, padding, activation, depth_mult, 0] }*
//! data       length u64 | bytes
//! ```
//!
//! `kind` is 1 for constants and 0 for activations (offset and length 0).
//! Offsets are relative to the start of the data bytes. Float tensors store
//! scale 0 and zero point 0. See `docs/qmdl.md` for an annotated dump.

use std::collections::BTreeMap;

use super::graph::{DType, ModelGraph, Op, OpAttrs, OpCode, Tensor, TensorData};
use super::ModelError;
use crate::nnops::{Activation, Padding};
use crate::qtensor::QuantParams;

pub const MAGIC: [u8; 4] = *b"QMDL";
pub const VERSION: u16 = 1;

pub fn save_model(graph: &ModelGraph) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes());

    out.extend_from_slice(&(graph.metadata().len() as u32).to_le_bytes());
    for (k, v) in graph.metadata() {
        out.extend_from_slice(&(k.len() as u16).to_le_bytes());
        out.extend_from_slice(k.as_bytes());
        out.extend_from_slice(&(v.len() as u32).to_le_bytes());
        out.extend_from_slice(v.as_bytes());
    }

    let mut data = Vec::new();
    out.extend_from_slice(&(graph.tensors().len() as u32).to_le_bytes());
    for t in graph.tensors() {
        out.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.push(t.dtype.code());
        out.push(u8::from(t.is_constant()));
        out.push(t.shape.len() as u8);
        for &d in &t.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        let (scale, zp) = t.qparams.map_or((0.0, 0), |q| (q.scale(), q.zero_point()));
        out.extend_from_slice(&scale.to_le_bytes());
        out.extend_from_slice(&zp.to_le_bytes());
        let offset = data.len() as u64;
        match &t.data {
            Some(TensorData::U8(v)) => data.extend_from_slice(v),
            Some(TensorData::I32(v)) => v.iter().for_each(|x| data.extend_from_slice(&x.to_le_bytes())),
            Some(TensorData::F32(v)) => v.iter().for_each(|x| data.extend_from_slice(&x.to_le_bytes())),
            None => {}
        }
        let length = data.len() as u64 - offset;
        out.extend_from_slice(&(if t.is_constant() { offset } else { 0 }).to_le_bytes());
        out.extend_from_slice(&length.to_le_bytes());
    }

    out.extend_from_slice(&(graph.ops().len() as u32).to_le_bytes());
    for op in graph.ops() {
        out.extend_from_slice(&op.code.code().to_le_bytes());
        out.push(op.inputs.len() as u8);
        out.push(op.outputs.len() as u8);
        for &i in op.inputs.iter().chain(&op.outputs) {
            out.extend_from_slice(&(i as u32).to_le_bytes());
        }
        let a = op.attrs;
        out.extend_from_slice(&[
            a.kernel.0,
            a.kernel.1,
            a.stride.0,
            a.stride.1,
            padding_code(a.padding),
            activation_code(a.activation),
            a.depth_multiplier,
            0,
        ]);
    }

    out.extend_from_slice(&(data.len() as u64).to_le_bytes());
    out.extend_from_slice(&data);
    out
}

fn padding_code(p: Padding) -> u8 {
    match p {
        Padding::Same => 0,
        Padding::Valid => 1,
    }
}

fn activation_code(a: Activation) -> u8 {
    match a {
        Activation::None => 0,
        Activation::Relu => 1,
        Activation::Relu6 => 2,
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    section: &'static str,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(ModelError::Truncated(self.section)),
        }
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], ModelError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8, ModelError> {
        Ok(self.array::<1>()?[0])
    }

    fn u16(&mut self) -> Result<u16, ModelError> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64, ModelError> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn i32(&mut self) -> Result<i32, ModelError> {
        Ok(i32::from_le_bytes(self.array()?))
    }

    fn f64(&mut self) -> Result<f64, ModelError> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    fn string(&mut self, len: usize) -> Result<String, ModelError> {
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| ModelError::InvalidUtf8(self.section))
    }

    /// Element count, bounded by what the remaining bytes could possibly hold.
    fn count(&mut self, min_item_size: usize) -> Result<usize, ModelError> {
        let n = self.u32()? as usize;
        if n.saturating_mul(min_item_size) > self.buf.len() - self.pos {
            return Err(ModelError::Truncated(self.section));
        }
        Ok(n)
    }
}

struct RawTensor {
    name: String,
    dtype: DType,
    constant: bool,
    shape: Vec<usize>,
    scale: f64,
    zero_point: i32,
    offset: u64,
    length: u64,
}

pub fn load_model(bytes: &[u8]) -> Result<ModelGraph, ModelError> {
    let mut r = Reader {
        buf: bytes,
        pos: 0,
        section: "header",
    };
    let magic: [u8; 4] = r.array()?;
    if magic != MAGIC {
        return Err(ModelError::BadMagic(magic));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(ModelError::UnsupportedVersion(version));
    }
    let _flags = r.u16()?;

    r.section = "metadata";
    let n = r.count(6)?;
    let mut metadata = BTreeMap::new();
    for _ in 0..n {
        let klen = r.u16()? as usize;
        let key = r.string(klen)?;
        let vlen = r.u32()? as usize;
        let value = r.string(vlen)?;
        metadata.insert(key, value);
    }

    r.section = "tensor table";
    let n = r.count(31)?;
    let mut raw = Vec::with_capacity(n);
    for _ in 0..n {
        let nlen = r.u16()? as usize;
        let name = r.string(nlen)?;
        let dtype = DType::from_code(r.u8()?)?;
        let constant = match r.u8()? {
            0 => false,
            1 => true,
            k => {
                return Err(ModelError::InvalidTensor {
                    tensor: name,
                    detail: format!("unknown tensor kind {k}"),
                })
            }
        };
        let rank = r.u8()? as usize;
        let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        raw.push(RawTensor {
            name,
            dtype,
            constant,
            shape,
            scale: r.f64()?,
            zero_point: r.i32()?,
            offset: r.u64()?,
            length: r.u64()?,
        });
    }

    r.section = "op list";
    let n = r.count(12)?;
    let mut ops = Vec::with_capacity(n);
    for oi in 0..n {
        let code = OpCode::from_code(r.u16()?)?;
        let n_in = r.u8()? as usize;
        let n_out = r.u8()? as usize;
        let mut read_refs = |k: usize| -> Result<Vec<usize>, ModelError> {
            (0..k)
                .map(|_| {
                    let i = r.u32()? as usize;
                    if i >= raw.len() {
                        Err(ModelError::DanglingTensor { op: oi, index: i })
                    } else {
                        Ok(i)
                    }
                })
                .collect()
        };
        let inputs = read_refs(n_in)?;
        let outputs = read_refs(n_out)?;
        let a: [u8; 8] = r.array()?;
        let bad = |detail: String| ModelError::InvalidAttribute { op: oi, detail };
        let padding = match a[4] {
            0 => Padding::Same,
            1 => Padding::Valid,
            p => return Err(bad(format!("unknown padding code {p}"))),
        };
        let activation = match a[5] {
            0 => Activation::None,
            1 => Activation::Relu,
            2 => Activation::Relu6,
            x => return Err(bad(format!("unknown activation code {x}"))),
        };
        ops.push(Op {
            code,
            inputs,
            outputs,
            attrs: OpAttrs {
                kernel: (a[0], a[1]),
                stride: (a[2], a[3]),
                padding,
                activation,
                depth_multiplier: a[6],
            },
        });
    }

    r.section = "data section";
    let data_len = r.u64()?;
    let data_len = usize::try_from(data_len).map_err(|_| ModelError::Truncated("data section"))?;
    let data = r.take(data_len)?;
    if r.pos != bytes.len() {
        return Err(ModelError::TrailingBytes(bytes.len() - r.pos));
    }

    let tensors = raw
        .into_iter()
        .map(|t| decode_tensor(t, data))
        .collect::<Result<Vec<_>, _>>()?;
    ModelGraph::new(metadata, tensors, ops)
}

fn decode_tensor(t: RawTensor, data: &[u8]) -> Result<Tensor, ModelError> {
    let qparams = match t.dtype {
        DType::F32 => {
            if t.scale != 0.0 || t.zero_point != 0 {
                return Err(ModelError::InvalidQuantParams {
                    tensor: t.name,
                    detail: "f32 tensors must store scale 0 and zero point 0".into(),
                });
            }
            None
        }
        DType::U8 | DType::I32 => Some(QuantParams::new(t.scale, t.zero_point).map_err(|e| {
            ModelError::InvalidQuantParams {
                tensor: t.name.clone(),
                detail: e.to_string(),
            }
        })?),
    };
    let numel = t.shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
    let payload = if t.constant {
        let expected = numel.and_then(|n| n.checked_mul(t.dtype.size()));
        if expected != Some(t.length as usize) {
            return Err(ModelError::InvalidTensor {
                tensor: t.name,
                detail: format!("data length {} does not match shape {:?}", t.length, t.shape),
            });
        }
        let start = usize::try_from(t.offset).ok();
        let bytes = start
            .and_then(|s| s.checked_add(t.length as usize).map(|e| (s, e)))
            .filter(|&(_, e)| e <= data.len())
            .map(|(s, e)| &data[s..e])
            .ok_or(ModelError::Truncated("tensor data"))?;
        Some(match t.dtype {
            DType::U8 => TensorData::U8(bytes.to_vec()),
            DType::I32 => TensorData::I32(
                bytes
                    .chunks_exact(4)
                    .map(|c| i32::from_le_bytes(c.try_into().expect("chunk of 4")))
                    .collect(),
            ),
            DType::F32 => TensorData::F32(
                bytes
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")))
                    .collect(),
            ),
        })
    } else {
        if t.offset != 0 || t.length != 0 {
            return Err(ModelError::InvalidTensor {
                tensor: t.name,
                detail: "activation tensors carry no data".into(),
            });
        }
        None
    };
    Ok(Tensor {
        name: t.name,
        dtype: t.dtype,
        shape: t.shape,
        qparams,
        data: payload,
    })
}
