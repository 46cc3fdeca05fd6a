//! Ground truth emitted alongside generated command streams.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::config::MemConfig;
use crate::ddr::Rw;
use crate::dma::{DmaRequest, RefLabel};
use crate::events::SemanticEvent;
use crate::pagemap::{PageMapping, UnmapEvent};

use super::ConfigSpaceSpec;

/// One expected reference. `rw` is implied by the label; `pid`/`virt` are
/// `None` where translation must miss, `dma_id` is `Some` where
/// classification must attach a request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "WireRef", into = "WireRef")]
pub struct LedgerRef {
    pub addr: u64,
    pub cycle: u64,
    pub channel: u16,
    pub label: RefLabel,
    pub in_window: bool,
    pub pid: Option<u32>,
    pub virt: Option<u64>,
    pub dma_id: Option<u32>,
}

impl LedgerRef {
    pub fn rw(&self) -> Rw {
        match self.label {
            RefLabel::CpuRead | RefLabel::DmaRead => Rw::Read,
            RefLabel::CpuWrite | RefLabel::DmaWrite => Rw::Write,
        }
    }
}

/// Array form keeps million-entry ledgers readable by line and about a third
/// the size of the named-field encoding.
#[derive(Serialize, Deserialize)]
struct WireRef(u64, u64, u16, u8, u8, Option<u32>, Option<u64>, Option<u32>);

fn label_code(label: RefLabel) -> u8 {
    match label {
        RefLabel::CpuRead => 0,
        RefLabel::CpuWrite => 1,
        RefLabel::DmaRead => 2,
        RefLabel::DmaWrite => 3,
    }
}

fn code_label(code: u8) -> RefLabel {
    match code & 3 {
        0 => RefLabel::CpuRead,
        1 => RefLabel::CpuWrite,
        2 => RefLabel::DmaRead,
        _ => RefLabel::DmaWrite,
    }
}

impl From<LedgerRef> for WireRef {
    fn from(r: LedgerRef) -> Self {
        WireRef(
            r.addr,
            r.cycle,
            r.channel,
            label_code(r.label),
            r.in_window as u8,
            r.pid,
            r.virt,
            r.dma_id,
        )
    }
}

impl From<WireRef> for LedgerRef {
    fn from(w: WireRef) -> Self {
        LedgerRef {
            addr: w.0,
            cycle: w.1,
            channel: w.2,
            label: code_label(w.3),
            in_window: w.4 != 0,
            pid: w.5,
            virt: w.6,
            dma_id: w.7,
        }
    }
}

/// Aggregate counts the pipeline must reproduce. Everything here is tracked
/// during generation, not recomputed afterwards, so a generator bug cannot
/// cancel out against an analyzer bug.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExpectedStats {
    /// References outside the config space (events excluded).
    pub normal_refs: u64,
    /// Config-space reads: scripted events plus DMA tags.
    pub event_count: u64,
    /// Per-label counts over in-window references only.
    pub label_counts: BTreeMap<RefLabel, u64>,
    pub out_of_window: u64,
    /// References translation must resolve (`pid` is `Some`).
    pub translated: u64,
    /// References translation must drop.
    pub translation_misses: u64,
    /// Longest same-pid run over translated references, when processes exist.
    pub max_pid_run: Option<u64>,
    /// Exact stride set (in cachelines) stream detection must report; only
    /// pinned for pure fixed-stride scenarios.
    pub expected_strides: Option<BTreeSet<i64>>,
    /// DMA request size histogram (bytes -> requests).
    pub dma_request_sizes: BTreeMap<u64, u64>,
    /// Bytes classification must attribute to each request id.
    pub per_request_bytes: BTreeMap<u32, u64>,
}

/// Everything a conformance run diffs the pipeline against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthLedger {
    pub name: String,
    pub seed: u64,
    pub config: MemConfig,
    pub config_space: ConfigSpaceSpec,
    pub quantum: u32,
    pub cycle_step: u32,
    /// Expected decode output minus events, cycle order.
    pub refs: Vec<LedgerRef>,
    /// Expected overlay events (DMA tags included), cycle order.
    pub events: Vec<SemanticEvent>,
    pub page_journal: Vec<PageMapping>,
    pub unmaps: Vec<UnmapEvent>,
    pub dma_journal: Vec<DmaRequest>,
    pub expect: ExpectedStats,
}

impl GroundTruthLedger {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("ledgers always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}
