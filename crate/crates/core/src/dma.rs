//! DMA traffic separation.
//!
//! A device-request journal gives each DMA transfer an id, an owner, a
//! direction, a buffer range, and begin/end cycles. The driver shim also
//! drops a pair of tag writes into the event region around each transfer:
//! user event id `0x1000 + request_id` at begin and `0x2000 + request_id` at
//! end, which is why plain request ids must stay below [`DMA_TAG_SPAN`].
//!
//! Classification runs over a cycle-sorted physical trace: a reference that
//! falls inside an active request's buffer is device traffic (labelled by its
//! own read/write direction); everything else in a tracing window is CPU
//! traffic. References outside every tracing window are tallied but not
//! labelled.

use crate::ddr::{PhysRef, Rw};
use crate::events::{session_windows, EventKind, SemanticEvent};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

/// User-event id base for begin tags.
pub const DMA_BEGIN_TAG_BASE: u32 = 0x1000;
/// User-event id base for end tags.
pub const DMA_END_TAG_BASE: u32 = 0x2000;
/// Request ids live in `0..DMA_TAG_SPAN`.
pub const DMA_TAG_SPAN: u32 = 0x1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DmaOwner {
    Disk,
    Nic,
}

/// Direction of the memory half of the transfer: `Read` means the device
/// reads DRAM (data leaves memory), `Write` means it writes DRAM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DmaDir {
    Read,
    Write,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DmaRequest {
    pub id: u32,
    pub owner: DmaOwner,
    pub dir: DmaDir,
    pub buf_start: u64,
    pub buf_size: u64,
    pub cycle_begin: u64,
    /// Exclusive; `u64::MAX` marks a request still open at trace end.
    pub cycle_end: u64,
}

impl DmaRequest {
    fn covers(&self, addr: u64, cycle: u64) -> bool {
        cycle >= self.cycle_begin
            && cycle < self.cycle_end
            && addr >= self.buf_start
            && addr - self.buf_start < self.buf_size
    }
}

pub fn dma_begin_tag(request_id: u32) -> EventKind {
    debug_assert!(request_id < DMA_TAG_SPAN);
    EventKind::User(DMA_BEGIN_TAG_BASE + request_id)
}

pub fn dma_end_tag(request_id: u32) -> EventKind {
    debug_assert!(request_id < DMA_TAG_SPAN);
    EventKind::User(DMA_END_TAG_BASE + request_id)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DmaTag {
    Begin(u32),
    End(u32),
}

/// Recover a request id from a user event, if it is a DMA tag.
pub fn parse_dma_tag(kind: EventKind) -> Option<DmaTag> {
    match kind {
        EventKind::User(id) if (DMA_BEGIN_TAG_BASE..DMA_BEGIN_TAG_BASE + DMA_TAG_SPAN).contains(&id) => {
            Some(DmaTag::Begin(id - DMA_BEGIN_TAG_BASE))
        }
        EventKind::User(id) if (DMA_END_TAG_BASE..DMA_END_TAG_BASE + DMA_TAG_SPAN).contains(&id) => {
            Some(DmaTag::End(id - DMA_END_TAG_BASE))
        }
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefLabel {
    CpuRead,
    CpuWrite,
    DmaRead,
    DmaWrite,
}

impl RefLabel {
    pub fn is_dma(self) -> bool {
        matches!(self, RefLabel::DmaRead | RefLabel::DmaWrite)
    }

    pub fn of(rw: Rw, dma: bool) -> RefLabel {
        match (dma, rw) {
            (false, Rw::Read) => RefLabel::CpuRead,
            (false, Rw::Write) => RefLabel::CpuWrite,
            (true, Rw::Read) => RefLabel::DmaRead,
            (true, Rw::Write) => RefLabel::DmaWrite,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LabeledRef {
    pub phys: PhysRef,
    pub label: RefLabel,
    /// Owning request when the label is a DMA one.
    pub dma_id: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "warning")]
pub enum DmaWarning {
    /// A reference matched several active requests; the most recently begun
    /// one (larger id on ties) took it.
    OverlappingRequests { cycle: u64, chosen: u32, also: u32 },
    /// Journal request with no end cycle; treated as open until trace end.
    OpenRequest { id: u32 },
    /// Journal request whose begin tag never shows up in the event stream.
    MissingBeginTag { id: u32 },
    /// Closed journal request whose end tag never shows up.
    MissingEndTag { id: u32 },
    /// DMA tag in the event stream with no journal entry.
    TagWithoutRequest { id: u32 },
    /// Request id collides with the tag encoding and was dropped.
    BadRequestId { id: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RequestClassStats {
    pub owner: DmaOwner,
    pub dir: DmaDir,
    pub requests: u64,
    pub total_buf_bytes: u64,
    pub mean_buf_bytes: f64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct DmaSummary {
    pub label_counts: BTreeMap<RefLabel, u64>,
    /// In-window references, i.e. the denominator for [`Self::label_pct`].
    pub labeled_total: u64,
    pub out_of_window: u64,
    /// Trace bytes attributed to each request (matched lines x line size).
    pub per_request_bytes: BTreeMap<u32, u64>,
    pub request_classes: Vec<RequestClassStats>,
    /// Count-weighted CDF over journal request buffer sizes.
    pub size_cdf: Vec<(u64, f64)>,
    pub warnings: Vec<DmaWarning>,
}

impl DmaSummary {
    pub fn label_pct(&self, label: RefLabel) -> f64 {
        if self.labeled_total == 0 {
            return 0.0;
        }
        let n = self.label_counts.get(&label).copied().unwrap_or(0);
        100.0 * n as f64 / self.labeled_total as f64
    }
}

/// Split a cycle-sorted trace into CPU and device traffic.
///
/// With no begin-tracing event at all the whole trace counts as one window;
/// otherwise only references inside a tracing window are labelled.
pub fn classify_dma(
    trace: &[PhysRef],
    requests: &[DmaRequest],
    events: &[SemanticEvent],
    cacheline_bytes: u32,
) -> (Vec<LabeledRef>, DmaSummary) {
    let mut summary = DmaSummary::default();

    let mut reqs: Vec<DmaRequest> = Vec::with_capacity(requests.len());
    for r in requests {
        if r.id >= DMA_TAG_SPAN {
            summary.warnings.push(DmaWarning::BadRequestId { id: r.id });
            continue;
        }
        if r.cycle_end == u64::MAX {
            summary.warnings.push(DmaWarning::OpenRequest { id: r.id });
        }
        reqs.push(*r);
    }
    reqs.sort_by_key(|r| (r.cycle_begin, r.id));

    cross_check_tags(&reqs, events, &mut summary.warnings);

    let windows = tracing_windows(events);

    let mut out = Vec::with_capacity(trace.len());
    let mut next_req = 0usize;
    let mut active: Vec<DmaRequest> = Vec::new();
    let mut win_idx = 0usize;
    for r in trace {
        while next_req < reqs.len() && reqs[next_req].cycle_begin <= r.cycle {
            active.push(reqs[next_req]);
            next_req += 1;
        }
        active.retain(|q| q.cycle_end > r.cycle);

        while win_idx < windows.len() && windows[win_idx].1 <= r.cycle {
            win_idx += 1;
        }
        let in_window = windows
            .get(win_idx)
            .is_some_and(|&(b, e)| r.cycle >= b && r.cycle < e);
        if !in_window {
            summary.out_of_window += 1;
            continue;
        }
        summary.labeled_total += 1;

        // Matching requests, best (latest begun, then largest id) last.
        let mut best: Option<&DmaRequest> = None;
        for q in &active {
            if !q.covers(r.addr, r.cycle) {
                continue;
            }
            match best {
                Some(b) if (b.cycle_begin, b.id) > (q.cycle_begin, q.id) => {
                    summary.warnings.push(DmaWarning::OverlappingRequests {
                        cycle: r.cycle,
                        chosen: b.id,
                        also: q.id,
                    });
                }
                Some(b) => {
                    summary.warnings.push(DmaWarning::OverlappingRequests {
                        cycle: r.cycle,
                        chosen: q.id,
                        also: b.id,
                    });
                    best = Some(q);
                }
                None => best = Some(q),
            }
        }
        let label = RefLabel::of(r.rw, best.is_some());
        let dma_id = best.map(|q| q.id);
        if let Some(id) = dma_id {
            *summary.per_request_bytes.entry(id).or_insert(0) += cacheline_bytes as u64;
        }
        *summary.label_counts.entry(label).or_insert(0) += 1;
        out.push(LabeledRef { phys: *r, label, dma_id });
    }

    summary.request_classes = class_stats(&reqs);
    summary.size_cdf = size_cdf(&reqs);
    (out, summary)
}

fn tracing_windows(events: &[SemanticEvent]) -> Vec<(u64, u64)> {
    if !events.iter().any(|e| e.kind == EventKind::BeginTracing) {
        return vec![(0, u64::MAX)];
    }
    session_windows(events).0
}

fn cross_check_tags(reqs: &[DmaRequest], events: &[SemanticEvent], warnings: &mut Vec<DmaWarning>) {
    let mut begins = BTreeSet::new();
    let mut ends = BTreeSet::new();
    for e in events {
        match parse_dma_tag(e.kind) {
            Some(DmaTag::Begin(id)) => {
                begins.insert(id);
            }
            Some(DmaTag::End(id)) => {
                ends.insert(id);
            }
            None => {}
        }
    }
    let journal_ids: BTreeSet<u32> = reqs.iter().map(|r| r.id).collect();
    for r in reqs {
        if !begins.contains(&r.id) {
            warnings.push(DmaWarning::MissingBeginTag { id: r.id });
        }
        if r.cycle_end != u64::MAX && !ends.contains(&r.id) {
            warnings.push(DmaWarning::MissingEndTag { id: r.id });
        }
    }
    for id in begins.union(&ends) {
        if !journal_ids.contains(id) {
            warnings.push(DmaWarning::TagWithoutRequest { id: *id });
        }
    }
}

fn class_stats(reqs: &[DmaRequest]) -> Vec<RequestClassStats> {
    let mut by_class: BTreeMap<(DmaOwner, DmaDir), (u64, u64)> = BTreeMap::new();
    for r in reqs {
        let e = by_class.entry((r.owner, r.dir)).or_insert((0, 0));
        e.0 += 1;
        e.1 += r.buf_size;
    }
    by_class
        .into_iter()
        .map(|((owner, dir), (requests, total))| RequestClassStats {
            owner,
            dir,
            requests,
            total_buf_bytes: total,
            mean_buf_bytes: total as f64 / requests as f64,
        })
        .collect()
}

fn size_cdf(reqs: &[DmaRequest]) -> Vec<(u64, f64)> {
    if reqs.is_empty() {
        return Vec::new();
    }
    let mut by_size: BTreeMap<u64, u64> = BTreeMap::new();
    for r in reqs {
        *by_size.entry(r.buf_size).or_insert(0) += 1;
    }
    let total = reqs.len() as f64;
    let mut cum = 0u64;
    by_size
        .into_iter()
        .map(|(size, n)| {
            cum += n;
            (size, cum as f64 / total)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rd(addr: u64, cycle: u64) -> PhysRef {
        PhysRef { addr, rw: Rw::Read, cycle, channel: 0 }
    }

    fn wr(addr: u64, cycle: u64) -> PhysRef {
        PhysRef { addr, rw: Rw::Write, cycle, channel: 0 }
    }

    fn ev(kind: EventKind, cycle: u64) -> SemanticEvent {
        SemanticEvent { kind, cycle, channel: 0 }
    }

    fn req(id: u32, buf_start: u64, buf_size: u64, begin: u64, end: u64) -> DmaRequest {
        DmaRequest {
            id,
            owner: DmaOwner::Disk,
            dir: DmaDir::Write,
            buf_start,
            buf_size,
            cycle_begin: begin,
            cycle_end: end,
        }
    }

    fn tags_for(r: &DmaRequest) -> [SemanticEvent; 2] {
        [ev(dma_begin_tag(r.id), r.cycle_begin), ev(dma_end_tag(r.id), r.cycle_end)]
    }

    #[test]
    fn buffer_and_cycle_window_both_gate_the_match() {
        let q = req(1, 0x1000, 0x100, 50, 150);
        let events = tags_for(&q);
        let trace = vec![
            wr(0x1040, 49), // right buffer, before the request begins
            wr(0x1000, 60), // inside buffer and cycle window
        ];
        let (labeled, s) = classify_dma(&trace, &[q], &events, 64);
        assert!(s.warnings.is_empty());
        let by_cycle: BTreeMap<u64, RefLabel> =
            labeled.iter().map(|l| (l.phys.cycle, l.label)).collect();
        assert_eq!(by_cycle[&60], RefLabel::DmaWrite);
        assert_eq!(by_cycle[&49], RefLabel::CpuWrite); // too early
    }

    #[test]
    fn outside_buffer_is_cpu_even_during_the_request() {
        let q = req(1, 0x1000, 0x100, 0, 1000);
        let (labeled, s) = classify_dma(&[rd(0x2000, 10)], &[q], &tags_for(&q), 64);
        assert_eq!(labeled[0].label, RefLabel::CpuRead);
        assert_eq!(labeled[0].dma_id, None);
        assert_eq!(s.label_pct(RefLabel::CpuRead), 100.0);
    }

    #[test]
    fn end_cycle_is_exclusive() {
        let q = req(1, 0x1000, 0x100, 50, 150);
        let trace = vec![wr(0x1000, 149), wr(0x1000, 150)];
        let (labeled, _) = classify_dma(&trace, &[q], &tags_for(&q), 64);
        assert_eq!(labeled[0].label, RefLabel::DmaWrite);
        assert_eq!(labeled[1].label, RefLabel::CpuWrite);
    }

    #[test]
    fn most_recently_begun_request_wins_overlap() {
        let a = req(1, 0x1000, 0x1000, 0, 1000);
        let b = req(2, 0x1800, 0x1000, 100, 1000);
        let mut events = Vec::new();
        events.extend(tags_for(&a));
        events.extend(tags_for(&b));
        // 0x1900 sits in both buffers once b begins.
        let (labeled, s) = classify_dma(&[wr(0x1900, 500)], &[a, b], &events, 64);
        assert_eq!(labeled[0].dma_id, Some(2));
        assert!(matches!(
            s.warnings[..],
            [DmaWarning::OverlappingRequests { chosen: 2, also: 1, .. }]
        ));
    }

    #[test]
    fn same_begin_cycle_overlap_takes_larger_id() {
        let a = req(7, 0x1000, 0x100, 0, 1000);
        let b = req(3, 0x1000, 0x100, 0, 1000);
        let mut events = Vec::new();
        events.extend(tags_for(&a));
        events.extend(tags_for(&b));
        let (labeled, _) = classify_dma(&[wr(0x1040, 5)], &[a, b], &events, 64);
        assert_eq!(labeled[0].dma_id, Some(7));
    }

    #[test]
    fn open_request_runs_to_trace_end_with_warning() {
        let q = req(1, 0x1000, 0x100, 50, u64::MAX);
        let events = [ev(dma_begin_tag(1), 50)];
        let (labeled, s) = classify_dma(&[wr(0x1000, 1_000_000)], &[q], &events, 64);
        assert_eq!(labeled[0].label, RefLabel::DmaWrite);
        assert!(s.warnings.contains(&DmaWarning::OpenRequest { id: 1 }));
        // open request owes no end tag
        assert!(!s.warnings.iter().any(|w| matches!(w, DmaWarning::MissingEndTag { .. })));
    }

    #[test]
    fn tag_cross_check_reports_gaps_both_ways() {
        let q = req(1, 0x1000, 0x100, 50, 150);
        let events = [ev(dma_end_tag(9), 70)];
        let (_, s) = classify_dma(&[], &[q], &events, 64);
        assert!(s.warnings.contains(&DmaWarning::MissingBeginTag { id: 1 }));
        assert!(s.warnings.contains(&DmaWarning::MissingEndTag { id: 1 }));
        assert!(s.warnings.contains(&DmaWarning::TagWithoutRequest { id: 9 }));
    }

    #[test]
    fn refs_outside_tracing_windows_are_counted_not_labeled() {
        let events = [
            ev(EventKind::BeginTracing, 100),
            ev(EventKind::EndTracing, 200),
        ];
        let trace = vec![rd(0, 50), rd(0, 150), rd(0, 250)];
        let (labeled, s) = classify_dma(&trace, &[], &events, 64);
        assert_eq!(labeled.len(), 1);
        assert_eq!(labeled[0].phys.cycle, 150);
        assert_eq!(s.out_of_window, 2);
        assert_eq!(s.labeled_total, 1);
    }

    #[test]
    fn no_begin_event_means_the_whole_trace_is_one_window() {
        let (labeled, s) = classify_dma(&[rd(0, 5), rd(64, 9)], &[], &[], 64);
        assert_eq!(labeled.len(), 2);
        assert_eq!(s.out_of_window, 0);
    }

    #[test]
    fn per_request_bytes_count_matched_lines() {
        let q = req(1, 0x1000, 0x1000, 0, 1000);
        let trace: Vec<PhysRef> = (0..10).map(|i| wr(0x1000 + i * 64, i)).collect();
        let (_, s) = classify_dma(&trace, &[q], &tags_for(&q), 64);
        assert_eq!(s.per_request_bytes[&1], 640);
    }

    #[test]
    fn class_stats_group_by_owner_and_direction() {
        let mut a = req(1, 0x1000, 128 * 1024, 0, 10);
        a.dir = DmaDir::Read;
        let mut b = req(2, 0x40000, 64 * 1024, 20, 30);
        b.dir = DmaDir::Read;
        let mut c = req(3, 0x80000, 4096, 40, 50);
        c.owner = DmaOwner::Nic;
        c.dir = DmaDir::Write;
        let mut events = Vec::new();
        for r in [&a, &b, &c] {
            events.extend(tags_for(r));
        }
        let (_, s) = classify_dma(&[], &[a, b, c], &events, 64);
        assert_eq!(s.request_classes.len(), 2);
        let disk = s
            .request_classes
            .iter()
            .find(|c| c.owner == DmaOwner::Disk)
            .unwrap();
        assert_eq!(disk.requests, 2);
        assert_eq!(disk.mean_buf_bytes, 96.0 * 1024.0);
        let cdf = &s.size_cdf;
        assert_eq!(cdf.len(), 3);
        assert_eq!(cdf[0], (4096, 1.0 / 3.0));
        assert_eq!(cdf[2], (128 * 1024, 1.0));
    }

    #[test]
    fn bad_request_id_is_dropped_with_warning() {
        let q = req(0x1000, 0x1000, 0x100, 0, 100);
        let (labeled, s) = classify_dma(&[wr(0x1000, 5)], &[q], &[], 64);
        assert_eq!(labeled[0].label, RefLabel::CpuWrite);
        assert!(s.warnings.contains(&DmaWarning::BadRequestId { id: 0x1000 }));
    }
}
