//! Affine 8-bit tensors and integer-only requantization.
//!
//! A quantized value `q` represents the real number `scale * (q - zero_point)`.
//! Rescaling a 32-bit accumulator to an 8-bit output uses a normalized
//! fixed-point multiplier `m0 * 2^-31 * 2^-right_shift`, applied with a
//! saturating rounding doubling high multiply followed by a rounding right
//! shift (gemmlowp style). All rounding is half away from zero.

use thiserror::Error;

use crate::audit;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuantError {
    #[error("invalid scale {0}: must be positive and finite")]
    InvalidScale(f64),
    #[error("invalid zero point {0}: must lie in [0, 255]")]
    InvalidZeroPoint(i32),
    #[error("multiplier {0} outside (0, 1): ill-conditioned layer scales")]
    MultiplierOutOfRange(f64),
    #[error("shape {shape:?} holds {expected} elements but data has {actual}")]
    DataLength {
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },
    #[error("shape {0:?} has a zero dimension")]
    EmptyDimension(Vec<usize>),
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantParams {
    scale: f64,
    zero_point: i32,
}

impl QuantParams {
    pub fn new(scale: f64, zero_point: i32) -> Result<Self, QuantError> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(QuantError::InvalidScale(scale));
        }
        if !(0..=255).contains(&zero_point) {
            return Err(QuantError::InvalidZeroPoint(zero_point));
        }
        Ok(Self { scale, zero_point })
    }

    /// Asymmetric parameters covering `[min, max]`, widened to include zero
    /// so that real 0 is exactly representable.
    pub fn from_min_max(min: f32, max: f32) -> Result<Self, QuantError> {
        audit::note_float();
        let lo = f64::from(min.min(0.0));
        let hi = f64::from(max.max(0.0));
        let mut scale = (hi - lo) / 255.0;
        if scale == 0.0 {
            scale = 1.0 / 255.0;
        }
        let zp = round_half_away(-lo / scale).clamp(0.0, 255.0) as i32;
        Self::new(scale, zp)
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn zero_point(&self) -> i32 {
        self.zero_point
    }
}

/// Rounds to nearest, ties away from zero.
#[inline]
pub fn round_half_away(x: f64) -> f64 {
    x.round()
}

pub fn quantize(x: f64, qp: QuantParams) -> u8 {
    audit::note_float();
    let q = round_half_away(x / qp.scale) + f64::from(qp.zero_point);
    q.clamp(0.0, 255.0) as u8
}

pub fn dequantize(q: u8, qp: QuantParams) -> f64 {
    audit::note_float();
    qp.scale * f64::from(i32::from(q) - qp.zero_point)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixedPointMultiplier {
    m0: i32,
    right_shift: u32,
}

/// Largest shift with meaningful output; beyond it every product rounds to 0.
const MAX_RIGHT_SHIFT: u32 = 62;

impl FixedPointMultiplier {
    pub fn m0(&self) -> i32 {
        self.m0
    }

    pub fn right_shift(&self) -> u32 {
        self.right_shift
    }

    /// The real multiplier this fixed-point pair encodes.
    pub fn reconstruct(&self) -> f64 {
        audit::note_float();
        f64::from(self.m0) * 2f64.powi(-31) * 2f64.powi(-(self.right_shift as i32))
    }

    /// Applies the multiplier to an accumulator without adding an offset.
    #[inline]
    pub fn apply(&self, acc: i32) -> i32 {
        rounding_divide_by_pot(saturating_rounding_doubling_high_mul(acc, self.m0), self.right_shift)
    }
}

pub fn compute_multiplier(m: f64) -> Result<FixedPointMultiplier, QuantError> {
    audit::note_float();
    if !(m > 0.0 && m < 1.0) {
        return Err(QuantError::MultiplierOutOfRange(m));
    }
    // Normalize into [0.5, 1); doubling is exact in binary floating point.
    let mut frac = m;
    let mut shift = 0u32;
    while frac < 0.5 {
        frac *= 2.0;
        shift += 1;
    }
    let mut m0 = round_half_away(frac * 2f64.powi(31)) as i64;
    if m0 == 1i64 << 31 {
        if shift == 0 {
            m0 = i64::from(i32::MAX);
        } else {
            m0 = 1i64 << 30;
            shift -= 1;
        }
    }
    Ok(FixedPointMultiplier {
        m0: m0 as i32,
        right_shift: shift.min(MAX_RIGHT_SHIFT),
    })
}

/// `round(a * b / 2^31)` with ties away from zero, saturating the single
/// overflow case `i32::MIN * i32::MIN`.
#[inline]
pub fn saturating_rounding_doubling_high_mul(a: i32, b: i32) -> i32 {
    if a == i32::MIN && b == i32::MIN {
        return i32::MAX;
    }
    let ab = i64::from(a) * i64::from(b);
    let nudge: i64 = if ab >= 0 { 1 << 30 } else { -(1 << 30) };
    // Division truncates toward zero, so the signed nudge rounds both signs
    // the same way.
    ((ab + nudge) / (1i64 << 31)) as i32
}

/// `round(x / 2^exponent)` with ties away from zero.
#[inline]
pub fn rounding_divide_by_pot(x: i32, exponent: u32) -> i32 {
    let x = i64::from(x);
    let mask = (1i64 << exponent) - 1;
    let threshold = (mask >> 1) + i64::from(x < 0);
    ((x >> exponent) + i64::from((x & mask) > threshold)) as i32
}

#[inline]
pub fn requantize(acc: i32, fpm: FixedPointMultiplier, out_zp: i32) -> u8 {
    let v = i64::from(fpm.apply(acc)) + i64::from(out_zp);
    v.clamp(0, 255) as u8
}

/// `round(num / den)` for non-negative `den`, ties away from zero.
#[inline]
pub fn rounding_div(num: i32, den: i32) -> i32 {
    debug_assert!(den > 0);
    let half = den / 2;
    if num >= 0 {
        (num + half) / den
    } else {
        -((-num + half) / den)
    }
}

fn check_shape(shape: &[usize], len: usize) -> Result<(), QuantError> {
    if shape.contains(&0) {
        return Err(QuantError::EmptyDimension(shape.to_vec()));
    }
    let expected: usize = shape.iter().product();
    if expected != len {
        return Err(QuantError::DataLength {
            shape: shape.to_vec(),
            expected,
            actual: len,
        });
    }
    Ok(())
}

/// Quantized tensor, row-major, batch/height/width/channels for images.
#[derive(Debug, Clone, PartialEq)]
pub struct QTensor {
    shape: Vec<usize>,
    data: Vec<u8>,
    qparams: QuantParams,
}

impl QTensor {
    pub fn new(shape: Vec<usize>, data: Vec<u8>, qparams: QuantParams) -> Result<Self, QuantError> {
        check_shape(&shape, data.len())?;
        Ok(Self {
            shape,
            data,
            qparams,
        })
    }

    pub fn filled(shape: Vec<usize>, value: u8, qparams: QuantParams) -> Result<Self, QuantError> {
        let n = shape.iter().product();
        Self::new(shape, vec![value; n], qparams)
    }

    pub fn quantize_from(t: &FTensor, qparams: QuantParams) -> Self {
        let data = t.data().iter().map(|&x| quantize(f64::from(x), qparams)).collect();
        Self {
            shape: t.shape().to_vec(),
            data,
            qparams,
        }
    }

    pub fn dequantize(&self) -> FTensor {
        audit::note_float();
        let data = self
            .data
            .iter()
            .map(|&q| dequantize(q, self.qparams) as f32)
            .collect();
        FTensor {
            shape: self.shape.clone(),
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn qparams(&self) -> QuantParams {
        self.qparams
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self, QuantError> {
        check_shape(&shape, self.data.len())?;
        self.shape = shape;
        Ok(self)
    }
}

/// 32-bit float tensor used by the reference path.
#[derive(Debug, Clone, PartialEq)]
pub struct FTensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl FTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self, QuantError> {
        check_shape(&shape, data.len())?;
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(QuantError::NonFinite(i));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; n],
        }
    }

    pub(crate) fn from_parts_unchecked(shape: Vec<usize>, data: Vec<f32>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self, QuantError> {
        check_shape(&shape, self.data.len())?;
        self.shape = shape;
        Ok(self)
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}
