//! Integer primitives for the quantized kernels.
//!
//! On x86_64 these use SSE2, which is part of the baseline target, so no
//! runtime feature detection is needed. Elsewhere they fall back to the
//! portable loops, which define the results: both paths are bit-identical.
//! Sums wrap in 32 bits; the kernels prove at construction that they never
//! actually do.

use super::BLOCK;
use crate::qtensor::FixedPointMultiplier;

/// `sum(a[i] * b[i])` over `a.len()` elements. `b` must be at least as long.
#[inline]
pub fn dot_i16(a: &[i16], b: &[i16]) -> i32 {
    let b = &b[..a.len()];
    #[cfg(target_arch = "x86_64")]
    {
        // SAFETY: SSE2 is always present on x86_64; lengths are equal.
        unsafe { x86::dot_i16(a, b) }
    }
    #[cfg(not(target_arch = "x86_64"))]
    {
        portable::dot_i16(a, b)
    }
}

/// Accumulates `N` consecutive blocks of output channels over a receptive
/// field. For block `b` and lane `j`:
/// `acc[b][j] += sum_p patch[2p] * wb[16p + 2j] + patch[2p + 1] * wb[16p + 2j + 1]`
/// where `wb = w[b * 8 * patch.len()..]`. `patch` has even length and each
/// block is laid out by [`super::pack_blocks`] with a group of 2.
#[inline]
pub fn conv_blocks<const N: usize>(acc: &mut [[i32; BLOCK]; N], patch: &[i16], w: &[i16]) {
    assert!(patch.len().is_multiple_of(2) && w.len() == N * patch.len() * BLOCK);
    #[cfg(target_arch = "x86_64")]
    {
        // SAFETY: SSE2 is always present on x86_64; lengths checked above.
        unsafe { x86::conv_blocks(acc, patch, w) }
    }
    #[cfg(not(target_arch = "x86_64"))]
    {
        portable::conv_blocks(acc, patch, w)
    }
}

/// Depthwise accumulation over pairs of taps, one block of channels at a
/// time. With `P = offsets.len() / 2` pairs, for channel `c = 8j + l`:
/// `acc[c] += sum_{p, s} x[offsets[2p + s] + c] * w[16 (jP + p) + 2l + s]`.
/// `offsets` has even length, `acc.len()` is a multiple of 8 and every
/// `offset + acc.len()` lies within `x`.
#[inline]
pub fn depthwise_blocks(acc: &mut [i32], x: &[i16], offsets: &[usize], w: &[i16]) {
    let pairs = offsets.len() / 2;
    assert!(offsets.len().is_multiple_of(2) && acc.len().is_multiple_of(BLOCK));
    assert!(w.len() == acc.len() * 2 * pairs);
    assert!(offsets.iter().all(|&o| o + acc.len() <= x.len()));
    #[cfg(target_arch = "x86_64")]
    {
        // SAFETY: SSE2 is always present on x86_64; bounds checked above.
        unsafe { x86::depthwise_blocks(acc, x, offsets, w) }
    }
    #[cfg(not(target_arch = "x86_64"))]
    {
        portable::depthwise_blocks(acc, x, offsets, w)
    }
}

/// `dst[i] = clamp(fpm.apply(acc[i]) + zp, lo, hi)`.
#[inline]
pub fn requantize_slice(acc: &[i32], fpm: FixedPointMultiplier, zp: i32, lo: u8, hi: u8, dst: &mut [u8]) {
    let dst = &mut dst[..acc.len()];
    #[cfg(target_arch = "x86_64")]
    {
        if fpm.right_shift() <= x86::MAX_VECTOR_SHIFT && (0..=255).contains(&zp) {
            // SAFETY: SSE2 is always present on x86_64; lengths are equal.
            unsafe { x86::requantize_slice(acc, fpm, zp, lo, hi, dst) };
            return;
        }
    }
    portable::requantize_slice(acc, fpm, zp, lo, hi, dst)
}

#[cfg_attr(target_arch = "x86_64", allow(dead_code))]
mod portable {
    use super::BLOCK;
    use crate::qtensor::FixedPointMultiplier;

    pub fn dot_i16(a: &[i16], b: &[i16]) -> i32 {
        a.iter()
            .zip(b)
            .fold(0i32, |s, (&x, &y)| s.wrapping_add(i32::from(x) * i32::from(y)))
    }

    pub fn conv_blocks<const N: usize>(acc: &mut [[i32; BLOCK]; N], patch: &[i16], w: &[i16]) {
        if patch.is_empty() {
            return;
        }
        for (acc, wb) in acc.iter_mut().zip(w.chunks_exact(patch.len() * BLOCK)) {
            for (x, wp) in patch.chunks_exact(2).zip(wb.chunks_exact(2 * BLOCK)) {
                for (a, w) in acc.iter_mut().zip(wp.chunks_exact(2)) {
                    let p = i32::from(x[0]) * i32::from(w[0]) + i32::from(x[1]) * i32::from(w[1]);
                    *a = a.wrapping_add(p);
                }
            }
        }
    }

    pub fn depthwise_blocks(acc: &mut [i32], x: &[i16], offsets: &[usize], w: &[i16]) {
        let pairs = offsets.len() / 2;
        for (j, block) in acc.chunks_exact_mut(BLOCK).enumerate() {
            for (p, taps) in offsets.chunks_exact(2).enumerate() {
                let wp = &w[(j * pairs + p) * 2 * BLOCK..][..2 * BLOCK];
                for (l, a) in block.iter_mut().enumerate() {
                    let c = j * BLOCK + l;
                    let v = i32::from(x[taps[0] + c]) * i32::from(wp[2 * l])
                        + i32::from(x[taps[1] + c]) * i32::from(wp[2 * l + 1]);
                    *a = a.wrapping_add(v);
                }
            }
        }
    }

    pub fn requantize_slice(acc: &[i32], fpm: FixedPointMultiplier, zp: i32, lo: u8, hi: u8, dst: &mut [u8]) {
        for (d, &a) in dst.iter_mut().zip(acc) {
            let v = i64::from(fpm.apply(a)) + i64::from(zp);
            *d = v.clamp(i64::from(lo), i64::from(hi)) as u8;
        }
    }
}

#[cfg(target_arch = "x86_64")]
mod x86 {
    use std::arch::x86_64::*;

    use super::BLOCK;
    use crate::qtensor::FixedPointMultiplier;

    /// The vector rounding shift keeps its mask in 32 bits.
    pub const MAX_VECTOR_SHIFT: u32 = 30;

    #[target_feature(enable = "sse2")]
    pub unsafe fn dot_i16(a: &[i16], b: &[i16]) -> i32 {
        let (ac, bc) = (a.chunks_exact(8), b.chunks_exact(8));
        let tail = super::portable::dot_i16(ac.remainder(), bc.remainder());
        let mut sum = _mm_setzero_si128();
        for (x, y) in ac.zip(bc) {
            let (vx, vy) = (_mm_loadu_si128(x.as_ptr().cast()), _mm_loadu_si128(y.as_ptr().cast()));
            sum = _mm_add_epi32(sum, _mm_madd_epi16(vx, vy));
        }
        let mut lanes = [0i32; 4];
        _mm_storeu_si128(lanes.as_mut_ptr().cast(), sum);
        lanes.iter().fold(tail, |s, &l| s.wrapping_add(l))
    }

    /// Caller guarantees an even `patch` and `w.len() == N * 8 * patch.len()`.
    #[target_feature(enable = "sse2")]
    pub unsafe fn conv_blocks<const N: usize>(acc: &mut [[i32; BLOCK]; N], patch: &[i16], w: &[i16]) {
        let block_len = patch.len() * BLOCK;
        let mut a = [[_mm_setzero_si128(); 2]; N];
        for (v, src) in a.iter_mut().zip(acc.iter()) {
            v[0] = _mm_loadu_si128(src.as_ptr().cast());
            v[1] = _mm_loadu_si128(src.as_ptr().add(4).cast());
        }
        let w = w.as_ptr();
        for (p, pair) in patch.chunks_exact(2).enumerate() {
            // Little-endian: the first tap lands in the low half of each
            // lane, matching the even weight of each pair.
            let vx = _mm_set1_epi32(pair.as_ptr().cast::<i32>().read_unaligned());
            for (b, v) in a.iter_mut().enumerate() {
                let wp = w.add(b * block_len + p * 2 * BLOCK);
                v[0] = _mm_add_epi32(v[0], _mm_madd_epi16(vx, _mm_loadu_si128(wp.cast())));
                v[1] = _mm_add_epi32(v[1], _mm_madd_epi16(vx, _mm_loadu_si128(wp.add(BLOCK).cast())));
            }
        }
        for (v, dst) in a.iter().zip(acc.iter_mut()) {
            _mm_storeu_si128(dst.as_mut_ptr().cast(), v[0]);
            _mm_storeu_si128(dst.as_mut_ptr().add(4).cast(), v[1]);
        }
    }

    /// Caller guarantees the bounds documented on the public wrapper.
    #[target_feature(enable = "sse2")]
    pub unsafe fn depthwise_blocks(acc: &mut [i32], x: &[i16], offsets: &[usize], w: &[i16]) {
        let pairs = offsets.len() / 2;
        for (j, block) in acc.chunks_exact_mut(BLOCK).enumerate() {
            let c = j * BLOCK;
            let mut a0 = _mm_loadu_si128(block.as_ptr().cast());
            let mut a1 = _mm_loadu_si128(block.as_ptr().add(4).cast());
            let wj = w.as_ptr().add(j * pairs * 2 * BLOCK);
            for (p, taps) in offsets.chunks_exact(2).enumerate() {
                let xa = _mm_loadu_si128(x.as_ptr().add(taps[0] + c).cast());
                let xb = _mm_loadu_si128(x.as_ptr().add(taps[1] + c).cast());
                let wp = wj.add(p * 2 * BLOCK);
                a0 = _mm_add_epi32(a0, _mm_madd_epi16(_mm_unpacklo_epi16(xa, xb), _mm_loadu_si128(wp.cast())));
                a1 = _mm_add_epi32(a1, _mm_madd_epi16(_mm_unpackhi_epi16(xa, xb), _mm_loadu_si128(wp.add(BLOCK).cast())));
            }
            _mm_storeu_si128(block.as_mut_ptr().cast(), a0);
            _mm_storeu_si128(block.as_mut_ptr().add(4).cast(), a1);
        }
    }

    /// Doubling high multiply of four lanes by a positive `m0`, ties away
    /// from zero: `floor((a * m0 + 2^30 - [a < 0]) / 2^31)`. The unsigned
    /// product of a negative lane exceeds the signed one by `m0 * 2^32`,
    /// which is `2 * m0` after the shift.
    #[target_feature(enable = "sse2")]
    unsafe fn high_mul(a: __m128i, m0: __m128i) -> __m128i {
        let sign = _mm_srai_epi32(a, 31);
        let nudge = _mm_set1_epi64x(1 << 30);
        let low = _mm_set_epi32(0, -1, 0, -1);
        // 64-bit lanes holding 1 where the even / odd input is negative.
        let neg_even = _mm_and_si128(sign, _mm_set_epi32(0, 1, 0, 1));
        let neg_odd = _mm_srli_epi64(sign, 63);
        let even = _mm_sub_epi64(_mm_add_epi64(_mm_mul_epu32(a, m0), nudge), neg_even);
        let odd = _mm_sub_epi64(_mm_add_epi64(_mm_mul_epu32(_mm_srli_epi64(a, 32), m0), nudge), neg_odd);
        let r = _mm_or_si128(
            _mm_and_si128(_mm_srli_epi64(even, 31), low),
            _mm_slli_epi64(_mm_srli_epi64(odd, 31), 32),
        );
        _mm_sub_epi32(r, _mm_and_si128(sign, _mm_add_epi32(m0, m0)))
    }

    /// Rounding arithmetic right shift, ties away from zero.
    #[target_feature(enable = "sse2")]
    unsafe fn shift_round(r: __m128i, shift: u32) -> __m128i {
        let mask = (1i32 << shift) - 1;
        let rem = _mm_and_si128(r, _mm_set1_epi32(mask));
        let threshold = _mm_sub_epi32(_mm_set1_epi32(mask >> 1), _mm_srai_epi32(r, 31));
        let shifted = _mm_sra_epi32(r, _mm_cvtsi32_si128(shift as i32));
        _mm_sub_epi32(shifted, _mm_cmpgt_epi32(rem, threshold))
    }

    /// Caller guarantees equal lengths, `right_shift <= MAX_VECTOR_SHIFT`,
    /// `m0 > 0` and `zp` in `[0, 255]`.
    #[target_feature(enable = "sse2")]
    pub unsafe fn requantize_slice(
        acc: &[i32],
        fpm: FixedPointMultiplier,
        zp: i32,
        lo: u8,
        hi: u8,
        dst: &mut [u8],
    ) {
        let m0 = _mm_set1_epi32(fpm.m0());
        let shift = fpm.right_shift();
        let zpv = _mm_set1_epi16(zp as i16);
        let (lov, hiv) = (_mm_set1_epi8(lo as i8), _mm_set1_epi8(hi as i8));
        let (ac, mut dc) = (acc.chunks_exact(8), dst.chunks_exact_mut(8));
        for (a, d) in ac.clone().zip(&mut dc) {
            let (a0, a1) = a.split_at(4);
            let r0 = shift_round(high_mul(_mm_loadu_si128(a0.as_ptr().cast()), m0), shift);
            let r1 = shift_round(high_mul(_mm_loadu_si128(a1.as_ptr().cast()), m0), shift);
            // Saturating narrowing keeps out-of-range values outside
            // [0, 255] on the correct side, so the final clamp is exact.
            let v = _mm_adds_epi16(_mm_packs_epi32(r0, r1), zpv);
            let b = _mm_min_epu8(_mm_max_epu8(_mm_packus_epi16(v, v), lov), hiv);
            _mm_storel_epi64(d.as_mut_ptr().cast(), b);
        }
        super::portable::requantize_slice(ac.remainder(), fpm, zp, lo, hi, dc.into_remainder());
    }
}
