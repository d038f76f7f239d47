//! Integer-only quantized operators.
//!
//! Each operator is split into a kernel constructor and `run`. Construction
//! derives the fixed-point multipliers and activation clamp bounds (the only
//! place floating point is touched); `run` uses integer arithmetic only.
//! Weights are stored centered on their zero point as `i16`, inputs are
//! centered the same way while padding, so 'same' padding contributes the
//! input zero point (real 0). Accumulators are 32-bit; every kernel proves
//! at construction that its worst-case accumulator fits.

use super::simd::{conv_blocks, depthwise_blocks, dot_i16, requantize_slice};
use super::{flat_features, pack_blocks, pad_block, Activation, ConvGeometry, ConvSpec, OpError, Padding, BLOCK};
use crate::qtensor::{
    compute_multiplier, quantize, requantize, rounding_div, FixedPointMultiplier, QTensor, QuantParams,
};

/// Largest magnitude of a centered 8-bit operand.
const MAX_CENTERED: i64 = 255;

/// Quantized clamp bounds for a fused activation.
pub fn activation_range(activation: Activation, qp: QuantParams) -> (u8, u8) {
    let zero = qp.zero_point().clamp(0, 255) as u8;
    match activation {
        Activation::None => (0, 255),
        Activation::Relu => (zero, 255),
        Activation::Relu6 => (zero, quantize(6.0, qp)),
    }
}

/// Quantizes a float bias to 32-bit integers at scale `s_in * s_w`, zero point 0.
pub fn quantize_bias(bias: &[f32], input_scale: f64, weight_scale: f64) -> Vec<i32> {
    crate::audit::note_float();
    let s = input_scale * weight_scale;
    bias.iter()
        .map(|&b| (f64::from(b) / s).round().clamp(f64::from(i32::MIN), f64::from(i32::MAX)) as i32)
        .collect()
}

fn check_accumulator(channel: usize, weight_abs_sum: i64, bias: i32) -> Result<(), OpError> {
    let bound = weight_abs_sum * MAX_CENTERED + i64::from(bias).abs();
    if bound > i64::from(i32::MAX) {
        return Err(OpError::AccumulatorOverflow { channel, bound });
    }
    Ok(())
}

fn centered(t: &QTensor) -> Vec<i16> {
    let zp = t.qparams().zero_point() as i16;
    t.data().iter().map(|&q| i16::from(q) - zp).collect()
}

fn expect_qparams(what: &str, got: QuantParams, want: QuantParams) -> Result<(), OpError> {
    if got != want {
        return Err(OpError::InvalidSpec(format!(
            "{what} quantization {got:?} differs from the kernel's {want:?}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct ConvKernel {
    spec: ConvSpec,
    weight_shape: Vec<usize>,
    /// Depthwise: centered weights as stored. Regular: centered weights
    /// packed in blocks of output channels, taps paired.
    weights: Vec<i16>,
    /// Depthwise only: centered weights in blocks of channels, with taps
    /// paired within each channel and the tap count padded to even.
    tap_pairs: Vec<i16>,
    /// Padded to whole blocks.
    bias: Vec<i32>,
    input_qp: QuantParams,
    output_qp: QuantParams,
    multiplier: FixedPointMultiplier,
    act_min: u8,
    act_max: u8,
}

impl ConvKernel {
    pub fn new(
        weights: &QTensor,
        bias: &[i32],
        spec: ConvSpec,
        input_qp: QuantParams,
        output_qp: QuantParams,
    ) -> Result<Self, OpError> {
        let ws = weights.shape();
        if ws.len() != 4 {
            return Err(OpError::ShapeMismatch(format!("conv weights must be 4-D, got {ws:?}")));
        }
        let out_c = if spec.depthwise { ws[3] } else { ws[0] };
        if bias.len() != out_c {
            return Err(OpError::ShapeMismatch(format!(
                "bias has {} entries for {out_c} output channels",
                bias.len()
            )));
        }
        let centered_w = centered(weights);
        for (co, &b) in bias.iter().enumerate() {
            let abs_sum: i64 = if spec.depthwise {
                centered_w.iter().skip(co).step_by(out_c).map(|&w| i64::from(w).abs()).sum()
            } else {
                let per = ws[1] * ws[2] * ws[3];
                centered_w[co * per..][..per].iter().map(|&w| i64::from(w).abs()).sum()
            };
            check_accumulator(co, abs_sum, b)?;
        }
        let m = input_qp.scale() * weights.qparams().scale() / output_qp.scale();
        let (act_min, act_max) = activation_range(spec.activation, output_qp);
        let (weights, tap_pairs) = if spec.depthwise {
            let tap_pairs = pack_tap_pairs(&centered_w, ws[1] * ws[2], out_c);
            (centered_w, tap_pairs)
        } else {
            (pack_blocks(&centered_w, out_c, 2), Vec::new())
        };
        Ok(Self {
            spec,
            weight_shape: ws.to_vec(),
            weights,
            tap_pairs,
            bias: pad_block(bias),
            input_qp,
            output_qp,
            multiplier: compute_multiplier(m)?,
            act_min,
            act_max,
        })
    }

    pub fn output_qparams(&self) -> QuantParams {
        self.output_qp
    }

    pub fn run(&self, input: &QTensor) -> Result<QTensor, OpError> {
        expect_qparams("conv input", input.qparams(), self.input_qp)?;
        let g = ConvGeometry::new(input.shape(), &self.weight_shape, &self.spec)?;
        let (kh, kw) = self.spec.kernel;
        let (sh, sw) = self.spec.stride;
        let zp_in = self.input_qp.zero_point() as i16;
        let zp_out = self.output_qp.zero_point();
        let fpm = self.multiplier;
        let (lo, hi) = (self.act_min, self.act_max);

        let mut out = vec![0u8; g.batch * g.out_h * g.out_w * g.out_c];
        // Depthwise blocks may read up to a block past the last pixel; the
        // matching weights are zero.
        let mut padded = vec![0i16; g.padded_h * g.padded_w * g.in_c + BLOCK];
        let mut acc = vec![0i32; self.bias.len()];
        let k = kh * kw * g.in_c;
        let mut patch = vec![0i16; k.next_multiple_of(2)];
        let block_len = patch.len() * BLOCK;
        // A 1x1 receptive field with an even channel count is already a
        // contiguous, pair-aligned run of the padded input.
        let direct = kh * kw == 1 && k % 2 == 0;
        let mut offsets = vec![0usize; (kh * kw).next_multiple_of(2)];

        for n in 0..g.batch {
            g.pad_into(input.data(), n, &mut padded, |q| i16::from(q) - zp_in);
            let out_image = &mut out[n * g.out_h * g.out_w * g.out_c..][..g.out_h * g.out_w * g.out_c];
            for oy in 0..g.out_h {
                for ox in 0..g.out_w {
                    let dst = &mut out_image[(oy * g.out_w + ox) * g.out_c..][..g.out_c];
                    if self.spec.depthwise {
                        acc.copy_from_slice(&self.bias);
                        let pixel = |ky: usize, kx: usize| ((oy * sh + ky) * g.padded_w + ox * sw + kx) * g.in_c;
                        let m = g.depth_multiplier;
                        if m == 1 {
                            for (t, o) in offsets.iter_mut().enumerate() {
                                let t = if t < kh * kw { t } else { 0 };
                                *o = pixel(t / kw, t % kw);
                            }
                            depthwise_blocks(&mut acc, &padded, &offsets, &self.tap_pairs);
                        } else {
                            for ky in 0..kh {
                                for kx in 0..kw {
                                    let px = &padded[pixel(ky, kx)..][..g.in_c];
                                    let wk = &self.weights[(ky * kw + kx) * g.out_c..][..g.out_c];
                                    for (c, &x) in px.iter().enumerate() {
                                        for (a, &w) in acc[c * m..][..m].iter_mut().zip(&wk[c * m..][..m]) {
                                            *a = a.wrapping_add(i32::from(x).wrapping_mul(i32::from(w)));
                                        }
                                    }
                                }
                            }
                        }
                    } else {
                        let patch = if direct {
                            &padded[(oy * sh * g.padded_w + ox * sw) * g.in_c..][..k]
                        } else {
                            g.gather_patch(&padded, &self.spec, oy, ox, &mut patch[..k]);
                            &patch[..]
                        };
                        conv_regular(&mut acc, patch, &self.weights, &self.bias, block_len);
                    }
                    requantize_slice(&acc[..g.out_c], fpm, zp_out, lo, hi, dst);
                }
            }
        }
        Ok(QTensor::new(g.output_shape(), out, self.output_qp)?)
    }
}

/// Depthwise weights `[tap][channel]` rearranged as
/// `[channel block][tap pair][channel in block][tap in pair]`, zero-filled
/// past the last tap and channel.
fn pack_tap_pairs(w: &[i16], taps: usize, channels: usize) -> Vec<i16> {
    let pairs = taps.div_ceil(2);
    let blocks = channels.div_ceil(BLOCK);
    let mut out = vec![0i16; blocks * pairs * 2 * BLOCK];
    for t in 0..taps {
        for c in 0..channels {
            let (j, l) = (c / BLOCK, c % BLOCK);
            out[(j * pairs + t / 2) * 2 * BLOCK + 2 * l + t % 2] = w[t * channels + c];
        }
    }
    out
}

/// Runs every output block of a regular convolution, four at a time while
/// enough remain.
fn conv_regular(acc: &mut [i32], patch: &[i16], weights: &[i16], bias: &[i32], block_len: usize) {
    fn run<const N: usize>(acc: &mut [i32], patch: &[i16], w: &[i16], bias: &[i32]) {
        let mut blocks = [[0i32; BLOCK]; N];
        for (b, src) in blocks.iter_mut().zip(bias.chunks_exact(BLOCK)) {
            b.copy_from_slice(src);
        }
        conv_blocks(&mut blocks, patch, w);
        acc.copy_from_slice(blocks.as_flattened());
    }
    const WIDE: usize = 4;
    let wide = acc.len() / (WIDE * BLOCK) * WIDE * BLOCK;
    let (acc_wide, acc_rest) = acc.split_at_mut(wide);
    let (bias_wide, bias_rest) = bias.split_at(wide);
    let (w_wide, w_rest) = weights.split_at(wide / BLOCK * block_len);
    for ((a, b), w) in acc_wide
        .chunks_exact_mut(WIDE * BLOCK)
        .zip(bias_wide.chunks_exact(WIDE * BLOCK))
        .zip(w_wide.chunks_exact(WIDE * block_len))
    {
        run::<WIDE>(a, patch, w, b);
    }
    for ((a, b), w) in acc_rest
        .chunks_exact_mut(BLOCK)
        .zip(bias_rest.chunks_exact(BLOCK))
        .zip(w_rest.chunks_exact(block_len))
    {
        run::<1>(a, patch, w, b);
    }
}

/// Elementwise add of two quantized tensors with independent scales.
///
/// Both operands are shifted left by 20 bits, rescaled onto a shared scale
/// of twice the larger input scale, summed, and requantized to the output.
#[derive(Debug, Clone)]
pub struct AddKernel {
    a_qp: QuantParams,
    b_qp: QuantParams,
    output_qp: QuantParams,
    /// Each operand's contribution on the shared scale, by input code.
    a_table: Vec<i32>,
    b_table: Vec<i32>,
    out_mul: FixedPointMultiplier,
    act_min: u8,
    act_max: u8,
}

const ADD_LEFT_SHIFT: u32 = 20;

impl AddKernel {
    pub fn new(
        a_qp: QuantParams,
        b_qp: QuantParams,
        output_qp: QuantParams,
        activation: Activation,
    ) -> Result<Self, OpError> {
        let twice_max = 2.0 * a_qp.scale().max(b_qp.scale());
        let (act_min, act_max) = activation_range(activation, output_qp);
        let table = |qp: QuantParams| -> Result<Vec<i32>, OpError> {
            let mul = compute_multiplier(qp.scale() / twice_max)?;
            Ok((0..=255)
                .map(|q| mul.apply((q - qp.zero_point()) << ADD_LEFT_SHIFT))
                .collect())
        };
        Ok(Self {
            a_qp,
            b_qp,
            output_qp,
            a_table: table(a_qp)?,
            b_table: table(b_qp)?,
            out_mul: compute_multiplier(twice_max / (f64::from(1u32 << ADD_LEFT_SHIFT) * output_qp.scale()))?,
            act_min,
            act_max,
        })
    }

    pub fn run(&self, a: &QTensor, b: &QTensor) -> Result<QTensor, OpError> {
        if a.shape() != b.shape() {
            return Err(OpError::ShapeMismatch(format!("add {:?} vs {:?}", a.shape(), b.shape())));
        }
        expect_qparams("add lhs", a.qparams(), self.a_qp)?;
        expect_qparams("add rhs", b.qparams(), self.b_qp)?;
        let sums: Vec<i32> = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(&qa, &qb)| self.a_table[usize::from(qa)] + self.b_table[usize::from(qb)])
            .collect();
        let mut data = vec![0u8; sums.len()];
        let zo = self.output_qp.zero_point();
        requantize_slice(&sums, self.out_mul, zo, self.act_min, self.act_max, &mut data);
        Ok(QTensor::new(a.shape().to_vec(), data, self.output_qp)?)
    }
}

/// Global average pool.
#[derive(Debug, Clone)]
pub struct AvgPoolKernel {
    input_qp: QuantParams,
    output_qp: QuantParams,
    rescale: Option<FixedPointMultiplier>,
}

impl AvgPoolKernel {
    pub fn new(input_qp: QuantParams, output_qp: QuantParams) -> Result<Self, OpError> {
        let rescale = if input_qp == output_qp {
            None
        } else {
            Some(compute_multiplier(input_qp.scale() / output_qp.scale())?)
        };
        Ok(Self {
            input_qp,
            output_qp,
            rescale,
        })
    }

    pub fn run(&self, input: &QTensor) -> Result<QTensor, OpError> {
        expect_qparams("avg pool input", input.qparams(), self.input_qp)?;
        let &[batch, h, w, c] = input.shape() else {
            return Err(OpError::ShapeMismatch(format!("avg pool input must be 4-D, got {:?}", input.shape())));
        };
        let count = (h * w) as i32;
        let zp_in = self.input_qp.zero_point();
        let mut out = Vec::with_capacity(batch * c);
        let mut sums = vec![0i32; c];
        for n in 0..batch {
            sums.fill(0);
            for px in input.data()[n * h * w * c..][..h * w * c].chunks(c) {
                for (s, &q) in sums.iter_mut().zip(px) {
                    *s += i32::from(q);
                }
            }
            for &s in &sums {
                out.push(match self.rescale {
                    None => rounding_div(s, count).clamp(0, 255) as u8,
                    Some(m) => requantize(rounding_div(s - count * zp_in, count), m, self.output_qp.zero_point()),
                });
            }
        }
        Ok(QTensor::new(vec![batch, 1, 1, c], out, self.output_qp)?)
    }
}

#[derive(Debug, Clone)]
pub struct DenseKernel {
    units: usize,
    features: usize,
    weights: Vec<i16>,
    bias: Vec<i32>,
    input_qp: QuantParams,
    output_qp: QuantParams,
    multiplier: FixedPointMultiplier,
    act_min: u8,
    act_max: u8,
}

impl DenseKernel {
    pub fn new(
        weights: &QTensor,
        bias: &[i32],
        activation: Activation,
        input_qp: QuantParams,
        output_qp: QuantParams,
    ) -> Result<Self, OpError> {
        let &[units, features] = weights.shape() else {
            return Err(OpError::ShapeMismatch(format!("dense weights must be 2-D, got {:?}", weights.shape())));
        };
        if bias.len() != units {
            return Err(OpError::ShapeMismatch(format!("bias has {} entries for {units} units", bias.len())));
        }
        let w = centered(weights);
        for (u, &b) in bias.iter().enumerate() {
            check_accumulator(u, w[u * features..][..features].iter().map(|&v| i64::from(v).abs()).sum(), b)?;
        }
        let (act_min, act_max) = activation_range(activation, output_qp);
        Ok(Self {
            units,
            features,
            weights: w,
            bias: bias.to_vec(),
            input_qp,
            output_qp,
            multiplier: compute_multiplier(input_qp.scale() * weights.qparams().scale() / output_qp.scale())?,
            act_min,
            act_max,
        })
    }

    pub fn run(&self, input: &QTensor) -> Result<QTensor, OpError> {
        expect_qparams("dense input", input.qparams(), self.input_qp)?;
        let (batch, features) = flat_features(input.shape())?;
        if features != self.features {
            return Err(OpError::ShapeMismatch(format!(
                "dense expects {} features, input {:?} has {features}",
                self.features,
                input.shape()
            )));
        }
        let zp_in = self.input_qp.zero_point() as i16;
        let zp_out = self.output_qp.zero_point();
        let mut row = vec![0i16; features];
        let mut out = Vec::with_capacity(batch * self.units);
        for src in input.data().chunks(features) {
            for (r, &q) in row.iter_mut().zip(src) {
                *r = i16::from(q) - zp_in;
            }
            for (u, w) in self.weights.chunks(features).enumerate() {
                let acc = self.bias[u].wrapping_add(dot_i16(&row, w));
                out.push(requantize(acc, self.multiplier, zp_out).clamp(self.act_min, self.act_max));
            }
        }
        Ok(QTensor::new(vec![batch, self.units], out, self.output_qp)?)
    }
}

/// Standalone ReLU6 clamp in the tensor's own quantization.
pub fn relu6(input: &QTensor) -> QTensor {
    let (lo, hi) = activation_range(Activation::Relu6, input.qparams());
    let data = input.data().iter().map(|&q| q.clamp(lo, hi)).collect();
    QTensor::new(input.shape().to_vec(), data, input.qparams()).expect("shape unchanged")
}

pub fn conv2d(
    input: &QTensor,
    weights: &QTensor,
    bias: &[i32],
    spec: &ConvSpec,
    out_qp: Option<QuantParams>,
) -> Result<QTensor, OpError> {
    let out_qp = out_qp.ok_or(OpError::MissingQuantParams("conv2d output"))?;
    ConvKernel::new(weights, bias, *spec, input.qparams(), out_qp)?.run(input)
}

pub fn dense(
    input: &QTensor,
    weights: &QTensor,
    bias: &[i32],
    activation: Activation,
    out_qp: Option<QuantParams>,
) -> Result<QTensor, OpError> {
    let out_qp = out_qp.ok_or(OpError::MissingQuantParams("dense output"))?;
    DenseKernel::new(weights, bias, activation, input.qparams(), out_qp)?.run(input)
}

pub fn avg_pool2d(input: &QTensor, out_qp: Option<QuantParams>) -> Result<QTensor, OpError> {
    AvgPoolKernel::new(input.qparams(), out_qp.unwrap_or(input.qparams()))?.run(input)
}

/// Quantized weights of one inverted residual block.
#[derive(Debug, Clone)]
pub struct QBlockWeights {
    pub expand: QTensor,
    pub expand_bias: Vec<i32>,
    pub depthwise: QTensor,
    pub depthwise_bias: Vec<i32>,
    pub project: QTensor,
    pub project_bias: Vec<i32>,
}

/// Activation quantization of the intermediate and output tensors of a block.
#[derive(Debug, Clone, Copy)]
pub struct BlockQParams {
    pub expanded: QuantParams,
    pub depthwise: QuantParams,
    pub projected: QuantParams,
    /// Output of the residual add; ignored when the block has no residual.
    pub output: QuantParams,
}

#[derive(Debug, Clone)]
pub struct InvertedResidualKernel {
    expand: ConvKernel,
    depthwise: ConvKernel,
    project: ConvKernel,
    residual: Option<AddKernel>,
}

impl InvertedResidualKernel {
    pub fn new(
        w: &QBlockWeights,
        qp: &BlockQParams,
        input_qp: QuantParams,
        stride: usize,
    ) -> Result<Self, OpError> {
        if stride != 1 && stride != 2 {
            return Err(OpError::InvalidSpec(format!("inverted residual stride must be 1 or 2, got {stride}")));
        }
        let expand = ConvKernel::new(
            &w.expand,
            &w.expand_bias,
            ConvSpec::new(1, 1, Padding::Same).with_activation(Activation::Relu6),
            input_qp,
            qp.expanded,
        )?;
        let depthwise = ConvKernel::new(
            &w.depthwise,
            &w.depthwise_bias,
            ConvSpec::new(3, stride, Padding::Same)
                .depthwise()
                .with_activation(Activation::Relu6),
            qp.expanded,
            qp.depthwise,
        )?;
        let project = ConvKernel::new(
            &w.project,
            &w.project_bias,
            ConvSpec::new(1, 1, Padding::Same),
            qp.depthwise,
            qp.projected,
        )?;
        let in_c = w.expand.shape()[3];
        let out_c = w.project.shape()[0];
        let residual = if stride == 1 && in_c == out_c {
            Some(AddKernel::new(input_qp, qp.projected, qp.output, Activation::None)?)
        } else {
            None
        };
        Ok(Self {
            expand,
            depthwise,
            project,
            residual,
        })
    }

    pub fn run(&self, input: &QTensor) -> Result<QTensor, OpError> {
        let h = self.expand.run(input)?;
        let h = self.depthwise.run(&h)?;
        let h = self.project.run(&h)?;
        match &self.residual {
            Some(add) => add.run(input, &h),
            None => Ok(h),
        }
    }
}

pub fn inverted_residual(
    input: &QTensor,
    w: &QBlockWeights,
    qp: &BlockQParams,
    stride: usize,
) -> Result<QTensor, OpError> {
    InvertedResidualKernel::new(w, qp, input.qparams(), stride)?.run(input)
}
