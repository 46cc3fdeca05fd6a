//! Trace analyzers: locality, streaming, and activity statistics.

pub mod intervals;
pub mod prefetch;
pub mod reuse;
pub mod runlen;
pub mod streams;

use crate::ddr::PhysRef;

/// Cacheline indices of a physical trace, the unit most analyzers work in.
pub fn line_indices(trace: &[PhysRef], cacheline_bytes: u32) -> impl Iterator<Item = u64> + '_ {
    let shift = cacheline_bytes.trailing_zeros();
    trace.iter().map(move |r| r.addr >> shift)
}

/// Page indices of a physical trace.
pub fn page_indices(trace: &[PhysRef], page_bytes: u64) -> impl Iterator<Item = u64> + '_ {
    trace.iter().map(move |r| r.addr / page_bytes)
}
