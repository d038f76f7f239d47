//! Neural-network operators in two implementations: a float reference
//! ([`float`]) and an integer-only quantized path ([`quant`]).
//!
//! Layouts follow the deployed-model convention: activations are
//! batch/height/width/channels, regular convolution weights are
//! out/kh/kw/in, depthwise weights are 1/kh/kw/(in * multiplier), dense
//! weights are out/in. Batch norm is expected to be folded into the
//! convolution weights before a graph reaches these operators. Dropout is
//! an inference-time identity and has no operator.

pub mod float;
pub mod quant;
mod simd;

use thiserror::Error;

use crate::audit;
use crate::qtensor::{FTensor, QuantError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OpError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid operator spec: {0}")]
    InvalidSpec(String),
    #[error("quantized operator is missing quantization parameters for {0}")]
    MissingQuantParams(&'static str),
    #[error("accumulator bound {bound} for output channel {channel} exceeds the 32-bit range")]
    AccumulatorOverflow { channel: usize, bound: i64 },
    #[error(transparent)]
    Quant(#[from] QuantError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    Same,
    Valid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    None,
    Relu,
    Relu6,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f32) -> f32 {
        match self {
            Activation::None => x,
            Activation::Relu => x.max(0.0),
            Activation::Relu6 => x.clamp(0.0, 6.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub padding: Padding,
    pub depthwise: bool,
    pub activation: Activation,
}

impl ConvSpec {
    pub fn new(kernel: usize, stride: usize, padding: Padding) -> Self {
        Self {
            kernel: (kernel, kernel),
            stride: (stride, stride),
            padding,
            depthwise: false,
            activation: Activation::None,
        }
    }

    pub fn depthwise(mut self) -> Self {
        self.depthwise = true;
        self
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    fn validate(&self) -> Result<(), OpError> {
        if self.kernel.0 == 0 || self.kernel.1 == 0 || self.stride.0 == 0 || self.stride.1 == 0 {
            return Err(OpError::InvalidSpec(format!(
                "kernel {:?} and stride {:?} must be positive",
                self.kernel, self.stride
            )));
        }
        Ok(())
    }
}

/// Output extent and leading pad along one spatial axis.
pub(crate) fn output_extent(
    input: usize,
    kernel: usize,
    stride: usize,
    padding: Padding,
) -> Result<(usize, usize), OpError> {
    match padding {
        Padding::Same => {
            let out = input.div_ceil(stride);
            let needed = (out - 1) * stride + kernel;
            let pad_total = needed.saturating_sub(input);
            Ok((out, pad_total / 2))
        }
        Padding::Valid => {
            if input < kernel {
                return Err(OpError::ShapeMismatch(format!(
                    "valid padding needs input extent {input} >= kernel {kernel}"
                )));
            }
            Ok(((input - kernel) / stride + 1, 0))
        }
    }
}

/// Output channels computed together by the regular-convolution kernels.
pub(crate) const BLOCK: usize = 8;

/// Regroups `[out_c][k]` weights into `[out_c / BLOCK][k / group][BLOCK][group]`,
/// zero-padding `out_c` to a multiple of [`BLOCK`] and `k` to a multiple of
/// `group`. The kernels stream one block of output channels over the whole
/// receptive field, `group` taps at a time.
pub(crate) fn pack_blocks<T: Copy + Default>(w: &[T], out_c: usize, group: usize) -> Vec<T> {
    let k = w.len() / out_c;
    let kp = k.next_multiple_of(group);
    let blocks = out_c.div_ceil(BLOCK);
    let mut out = vec![T::default(); blocks * kp * BLOCK];
    for (co, row) in w.chunks_exact(k).enumerate() {
        let (cb, j) = (co / BLOCK, co % BLOCK);
        for (i, &v) in row.iter().enumerate() {
            let (p, t) = (i / group, i % group);
            out[((cb * (kp / group) + p) * BLOCK + j) * group + t] = v;
        }
    }
    out
}

/// `v` zero-padded to a multiple of [`BLOCK`].
pub(crate) fn pad_block<T: Copy + Default>(v: &[T]) -> Vec<T> {
    let mut out = v.to_vec();
    out.resize(v.len().next_multiple_of(BLOCK), T::default());
    out
}

/// Resolved geometry of a convolution over an NHWC input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeometry {
    pub batch: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub in_c: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub out_c: usize,
    pub pad_top: usize,
    pub pad_left: usize,
    /// Padded buffer extents: exactly what the output grid reads.
    pub padded_h: usize,
    pub padded_w: usize,
    pub depth_multiplier: usize,
}

impl ConvGeometry {
    pub fn new(input: &[usize], weights: &[usize], spec: &ConvSpec) -> Result<Self, OpError> {
        spec.validate()?;
        let &[batch, in_h, in_w, in_c] = input else {
            return Err(OpError::ShapeMismatch(format!("conv input must be 4-D, got {input:?}")));
        };
        let &[w0, kh, kw, w3] = weights else {
            return Err(OpError::ShapeMismatch(format!("conv weights must be 4-D, got {weights:?}")));
        };
        if (kh, kw) != spec.kernel {
            return Err(OpError::ShapeMismatch(format!(
                "weights {weights:?} disagree with kernel {:?}",
                spec.kernel
            )));
        }
        let (out_c, depth_multiplier) = if spec.depthwise {
            if w0 != 1 || w3 % in_c != 0 || w3 == 0 {
                return Err(OpError::ShapeMismatch(format!(
                    "depthwise weights {weights:?} incompatible with {in_c} input channels"
                )));
            }
            (w3, w3 / in_c)
        } else {
            if w3 != in_c {
                return Err(OpError::ShapeMismatch(format!(
                    "weights {weights:?} expect {w3} input channels, input has {in_c}"
                )));
            }
            (w0, 1)
        };
        let (out_h, pad_top) = output_extent(in_h, kh, spec.stride.0, spec.padding)?;
        let (out_w, pad_left) = output_extent(in_w, kw, spec.stride.1, spec.padding)?;
        Ok(Self {
            batch,
            in_h,
            in_w,
            in_c,
            out_h,
            out_w,
            out_c,
            pad_top,
            pad_left,
            padded_h: (out_h - 1) * spec.stride.0 + kh,
            padded_w: (out_w - 1) * spec.stride.1 + kw,
            depth_multiplier,
        })
    }

    pub fn output_shape(&self) -> Vec<usize> {
        vec![self.batch, self.out_h, self.out_w, self.out_c]
    }

    /// Copies the receptive field of output `(oy, ox)` from a padded image
    /// into `patch`, laid out like one output channel's weights.
    pub fn gather_patch<T: Copy>(&self, padded: &[T], spec: &ConvSpec, oy: usize, ox: usize, patch: &mut [T]) {
        let (kh, kw) = spec.kernel;
        let span = kw * self.in_c;
        for (ky, dst) in patch.chunks_exact_mut(span).take(kh).enumerate() {
            let row = ((oy * spec.stride.0 + ky) * self.padded_w + ox * spec.stride.1) * self.in_c;
            dst.copy_from_slice(&padded[row..][..span]);
        }
    }

    /// Copies one image of the batch into a zero-initialised padded buffer,
    /// mapping each element through `f`. The border is never written, so a
    /// buffer can be reused across images.
    pub fn pad_into<S: Copy, T: Copy>(&self, src: &[S], n: usize, dst: &mut [T], f: impl Fn(S) -> T) {
        let c = self.in_c;
        let image = &src[n * self.in_h * self.in_w * c..][..self.in_h * self.in_w * c];
        for y in 0..self.in_h {
            let py = y + self.pad_top;
            if py >= self.padded_h {
                break;
            }
            for x in 0..self.in_w {
                let px = x + self.pad_left;
                if px >= self.padded_w {
                    break;
                }
                let s = &image[(y * self.in_w + x) * c..][..c];
                let d = &mut dst[(py * self.padded_w + px) * c..][..c];
                for (d, &s) in d.iter_mut().zip(s) {
                    *d = f(s);
                }
            }
        }
    }
}

pub(crate) fn flat_features(shape: &[usize]) -> Result<(usize, usize), OpError> {
    match shape {
        [] => Err(OpError::ShapeMismatch("dense input has no dimensions".into())),
        [batch, rest @ ..] => Ok((*batch, rest.iter().product::<usize>().max(1))),
    }
}

pub fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

/// Elementwise logistic function.
pub fn sigmoid_scores(logits: &FTensor) -> FTensor {
    audit::note_float();
    let data = logits.data().iter().map(|&x| sigmoid(x)).collect();
    FTensor::from_parts_unchecked(logits.shape().to_vec(), data)
}

/// Softmax over the last dimension.
pub fn softmax_scores(logits: &FTensor) -> FTensor {
    audit::note_float();
    let width = logits.shape().last().copied().unwrap_or(1);
    let mut data = Vec::with_capacity(logits.data().len());
    for row in logits.data().chunks(width) {
        let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let exps: Vec<f32> = row.iter().map(|&x| (x - max).exp()).collect();
        let sum: f32 = exps.iter().sum();
        data.extend(exps.iter().map(|e| e / sum));
    }
    FTensor::from_parts_unchecked(logits.shape().to_vec(), data)
}
