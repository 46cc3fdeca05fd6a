//! Fixed-width interval activity series.
//!
//! Buckets a trace into windows of `interval_cycles` and tallies traffic per
//! window: reference and read/write counts, bytes moved, per-bank spread, and
//! per-address-bit toggle counts between consecutive references (booked to
//! the later reference's window, including across window edges). Idle windows
//! take no rows, so a sparse series stays small however long the trace idles.

use crate::config::{AddressMapping, MemConfig};
use crate::ddr::{PhysRef, Rw};
use serde::Serialize;
use std::collections::BTreeMap;

pub const DEFAULT_INTERVAL_CYCLES: u64 = 100_000;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IntervalRow {
    pub refs: u64,
    pub reads: u64,
    pub writes: u64,
    pub bytes: u64,
    pub per_bank: BTreeMap<u16, u64>,
    /// address bit position -> toggles against the previous reference
    pub bit_toggles: BTreeMap<u8, u64>,
}

impl IntervalRow {
    pub fn total_toggles(&self) -> u64 {
        self.bit_toggles.values().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalSeries {
    pub interval_cycles: u64,
    pub freq_mhz: u32,
    pub cacheline_bytes: u32,
    /// interval index (cycle / interval_cycles) -> activity
    pub rows: BTreeMap<u64, IntervalRow>,
}

impl IntervalSeries {
    /// Average traffic of one window in bytes per second.
    pub fn bandwidth_bytes_per_sec(&self, row: &IntervalRow) -> f64 {
        let freq_hz = self.freq_mhz as f64 * 1e6;
        row.bytes as f64 * freq_hz / self.interval_cycles as f64
    }

    pub fn busiest(&self) -> Option<(u64, &IntervalRow)> {
        self.rows.iter().map(|(&i, r)| (i, r)).max_by_key(|(_, r)| r.refs)
    }
}

pub fn interval_series(
    trace: &[PhysRef],
    interval_cycles: u64,
    config: &MemConfig,
    mapping: &AddressMapping,
) -> IntervalSeries {
    assert!(interval_cycles >= 1);
    let mut rows: BTreeMap<u64, IntervalRow> = BTreeMap::new();
    let mut prev_addr: Option<u64> = None;
    for r in trace {
        let row = rows.entry(r.cycle / interval_cycles).or_default();
        row.refs += 1;
        row.bytes += config.cacheline_bytes as u64;
        match r.rw {
            Rw::Read => row.reads += 1,
            Rw::Write => row.writes += 1,
        }
        let (_, bank, _) = mapping.decompose(r.addr);
        *row.per_bank.entry(bank).or_insert(0) += 1;
        if let Some(prev) = prev_addr {
            let mut diff = prev ^ r.addr;
            while diff != 0 {
                let bit = diff.trailing_zeros() as u8;
                *row.bit_toggles.entry(bit).or_insert(0) += 1;
                diff &= diff - 1;
            }
        }
        prev_addr = Some(r.addr);
    }
    IntervalSeries {
        interval_cycles,
        freq_mhz: config.freq_mhz,
        cacheline_bytes: config.cacheline_bytes,
        rows,
    }
}
