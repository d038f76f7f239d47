//! Floating-point audit counter.
//!
//! Every routine that produces floating-point values (float operators,
//! `quantize`, `dequantize`, multiplier derivation) bumps a thread-local
//! counter on entry. Tests reset the counter, run a prepared quantized
//! graph, and assert it is still zero, which shows the integer path never
//! reaches a float routine.

use std::cell::Cell;

thread_local! {
    static FLOAT_CALLS: Cell<u64> = const { Cell::new(0) };
}

#[inline]
pub fn note_float() {
    FLOAT_CALLS.with(|c| c.set(c.get() + 1));
}

pub fn float_calls() -> u64 {
    FLOAT_CALLS.with(Cell::get)
}

pub fn reset() {
    FLOAT_CALLS.with(|c| c.set(0));
}
