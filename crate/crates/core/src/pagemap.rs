//! Physical-to-virtual reconstruction from a page-table journal.
//!
//! The journal records every PTE update as `{cycle, pid, virt_page,
//! phys_page, pte_addr}`, optionally interleaved with explicit unmap events.
//! Folding it forward gives each physical page a list of disjoint validity
//! intervals `[mapped, unmapped)`; a later remap of the same physical page
//! implicitly closes the open interval at the remap cycle. Translating a
//! reference is then a lookup of (phys page, cycle), keeping the in-page
//! offset. References that hit no interval are counted as misses and left
//! out of the virtual stream; device traffic with no mapping is expected to
//! produce some.

use crate::ddr::{PhysRef, Rw};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};

pub const DEFAULT_PAGE_BYTES: u64 = 4096;

/// One PTE-update journal record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PageMapping {
    pub cycle: u64,
    pub pid: u32,
    pub virt_page: u64,
    pub phys_page: u64,
    pub pte_addr: u64,
}

/// Explicit unmap of a physical page.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnmapEvent {
    pub cycle: u64,
    pub phys_page: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PagemapWarning {
    /// Two mappings of one physical page at the same cycle; the later journal
    /// record wins.
    ConflictingMapping { phys_page: u64, cycle: u64 },
    /// Unmap of a page with no open mapping; ignored.
    UnmapWithoutMapping { phys_page: u64, cycle: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Interval {
    from: u64,
    /// Exclusive; `u64::MAX` while open.
    to: u64,
    pid: u32,
    virt_page: u64,
}

/// Per-physical-page validity intervals, ready for cycle lookups.
#[derive(Debug, Clone, Default)]
pub struct MappingIndex {
    per_phys: HashMap<u64, Vec<Interval>>,
    map_counts: BTreeMap<u64, u64>,
}

impl MappingIndex {
    /// `(pid, virt_page)` owning `phys_page` at `cycle`, if any.
    pub fn query(&self, phys_page: u64, cycle: u64) -> Option<(u32, u64)> {
        let intervals = self.per_phys.get(&phys_page)?;
        let idx = intervals.partition_point(|iv| iv.from <= cycle);
        let iv = intervals[..idx].last()?;
        (cycle < iv.to).then_some((iv.pid, iv.virt_page))
    }

    /// Translate a byte address, preserving the in-page offset.
    pub fn translate_addr(&self, addr: u64, cycle: u64, page_bytes: u64) -> Option<(u32, u64)> {
        let (pid, virt_page) = self.query(addr / page_bytes, cycle)?;
        Some((pid, virt_page * page_bytes + addr % page_bytes))
    }

    /// How many times each physical page was mapped, conflicts included.
    pub fn map_counts(&self) -> &BTreeMap<u64, u64> {
        &self.map_counts
    }

    pub fn mapped_pages(&self) -> usize {
        self.per_phys.len()
    }
}

/// Fold a journal (plus explicit unmaps) into a [`MappingIndex`].
///
/// Both inputs are sorted by cycle internally (stably, so equal-cycle journal
/// order is preserved); at the same cycle an unmap applies before a map, so
/// an unmap+remap pair at one instant reads as a remap.
pub fn build_mapping_index(
    journal: &[PageMapping],
    unmaps: &[UnmapEvent],
) -> (MappingIndex, Vec<PagemapWarning>) {
    let mut maps: Vec<&PageMapping> = journal.iter().collect();
    maps.sort_by_key(|m| m.cycle);
    let mut unmaps: Vec<&UnmapEvent> = unmaps.iter().collect();
    unmaps.sort_by_key(|u| u.cycle);

    let mut index = MappingIndex::default();
    let mut warnings = Vec::new();
    let (mut mi, mut ui) = (0, 0);
    loop {
        let take_unmap = match (maps.get(mi), unmaps.get(ui)) {
            (None, None) => break,
            (Some(_), None) => false,
            (None, Some(_)) => true,
            (Some(m), Some(u)) => u.cycle <= m.cycle,
        };
        if take_unmap {
            let u = unmaps[ui];
            ui += 1;
            match index.per_phys.get_mut(&u.phys_page).and_then(|ivs| ivs.last_mut()) {
                Some(last) if last.to == u64::MAX && last.from <= u.cycle => last.to = u.cycle,
                _ => warnings.push(PagemapWarning::UnmapWithoutMapping {
                    phys_page: u.phys_page,
                    cycle: u.cycle,
                }),
            }
        } else {
            let m = maps[mi];
            mi += 1;
            *index.map_counts.entry(m.phys_page).or_insert(0) += 1;
            let ivs = index.per_phys.entry(m.phys_page).or_default();
            if let Some(last) = ivs.last_mut() {
                if last.from == m.cycle {
                    // Same-instant double map: the later record replaces it.
                    warnings.push(PagemapWarning::ConflictingMapping {
                        phys_page: m.phys_page,
                        cycle: m.cycle,
                    });
                    ivs.pop();
                } else if last.to == u64::MAX {
                    // Remap closes the open interval at the new cycle.
                    last.to = m.cycle;
                }
            }
            ivs.push(Interval {
                from: m.cycle,
                to: u64::MAX,
                pid: m.pid,
                virt_page: m.virt_page,
            });
        }
    }
    (index, warnings)
}

/// A reference moved back into some process's virtual address space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct VirtualRef {
    pub pid: u32,
    pub virt_addr: u64,
    pub rw: Rw,
    pub cycle: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct TranslationStats {
    pub total: u64,
    pub translated: u64,
    pub misses: u64,
}

impl TranslationStats {
    pub fn miss_rate_pct(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            100.0 * self.misses as f64 / self.total as f64
        }
    }
}

/// Translate a physical trace; misses are counted and dropped from the
/// virtual stream.
pub fn translate(
    trace: &[PhysRef],
    index: &MappingIndex,
    page_bytes: u64,
) -> (Vec<VirtualRef>, TranslationStats) {
    let mut out = Vec::with_capacity(trace.len());
    let mut stats = TranslationStats::default();
    for r in trace {
        stats.total += 1;
        match index.translate_addr(r.addr, r.cycle, page_bytes) {
            Some((pid, virt_addr)) => {
                stats.translated += 1;
                out.push(VirtualRef { pid, virt_addr, rw: r.rw, cycle: r.cycle });
            }
            None => stats.misses += 1,
        }
    }
    (out, stats)
}
