//! Turns a validated scenario into command streams plus ground truth.
//!
//! One global clock covers all channels; every emitted command advances it
//! by `cycle_step` first, so cycles are globally unique and the merged
//! decode of all channels has exactly one legal order. Each channel keeps
//! its own open-row mirror and gets an ACTIVATE ahead of any column command
//! that switches rows, which is what makes the generated streams decode
//! without warnings.

use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::config::AddressMapping;
use crate::ddr::{CommandKind, DdrCommand, Rw};
use crate::dma::{
    DmaDir, DmaOwner, DmaRequest, RefLabel, DMA_BEGIN_TAG_BASE, DMA_END_TAG_BASE,
};
use crate::events::{ConfigSpace, EventKind, SemanticEvent, USER_SLOT_BASE};
use crate::pagemap::PageMapping;

use super::ledger::{ExpectedStats, GroundTruthLedger, LedgerRef};
use super::patterns::quicksort_accesses;
use super::{actor_rng, ActorSpec, MapLayout, ScenarioSpec, PAGE_BYTES, PTE_REGION_BASE};

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedScenario {
    /// One command stream per channel, each cycle-sorted.
    pub commands: Vec<Vec<DdrCommand>>,
    pub ledger: GroundTruthLedger,
}

impl GeneratedScenario {
    pub fn total_commands(&self) -> usize {
        self.commands.iter().map(Vec::len).sum()
    }
}

struct Channel {
    cmds: Vec<DdrCommand>,
    open_rows: Vec<Option<u32>>,
}

enum ProcKind {
    Walk { count: u64, stride: u64 },
    Sorted { acc: Vec<(u32, Rw)>, element_bytes: u64 },
}

enum RefActor {
    Sequential {
        start: u64,
        count: u64,
        stride: i64,
        write_every: u64,
        channel: u16,
        emitted: u64,
    },
    Random {
        range_start: u64,
        lines: u64,
        count: u64,
        write_every: u64,
        channel: u16,
        rng: ChaCha8Rng,
        emitted: u64,
    },
    Process {
        pid: u32,
        virt_start: u64,
        page_map: Vec<u64>,
        /// Physical page misses land on; absent from the journal.
        reserved_page: u64,
        unmapped_every: u64,
        write_every: u64,
        channel: u16,
        kind: ProcKind,
        emitted: u64,
        miss_rotor: u64,
    },
    Dma {
        owner: DmaOwner,
        dir: DmaDir,
        buf_start: u64,
        buf_size: u64,
        begin_cycle: u64,
        remaining: u32,
        channel: u16,
    },
}

impl RefActor {
    fn exhausted(&self) -> bool {
        match self {
            RefActor::Sequential { emitted, count, .. } => emitted >= count,
            RefActor::Random { emitted, count, .. } => emitted >= count,
            RefActor::Process { emitted, kind, .. } => match kind {
                ProcKind::Walk { count, .. } => emitted >= count,
                ProcKind::Sorted { acc, .. } => *emitted as usize >= acc.len(),
            },
            RefActor::Dma { remaining, .. } => *remaining == 0,
        }
    }
}

struct EventActor {
    offset: u64,
    at_cycle: u64,
    channel: u16,
    fired: bool,
}

/// 0 = all reads, 1 = all writes, k = every k-th access writes.
fn rw_for(write_every: u64, idx: u64) -> Rw {
    match write_every {
        0 => Rw::Read,
        1 => Rw::Write,
        k if (idx + 1) % k == 0 => Rw::Write,
        _ => Rw::Read,
    }
}

enum Turn {
    Acted,
    /// DMA actor waiting for its begin cycle.
    Waiting(u64),
}

pub(super) struct Engine<'a> {
    spec: &'a ScenarioSpec,
    line: u64,
    step: u64,
    clock: u64,
    mapping: AddressMapping,
    cs: ConfigSpace,
    chans: Vec<Channel>,
    actors: Vec<RefActor>,
    event_actors: Vec<EventActor>,
    refs: Vec<LedgerRef>,
    events: Vec<SemanticEvent>,
    page_journal: Vec<PageMapping>,
    dma_journal: Vec<DmaRequest>,
    expect: ExpectedStats,
    in_window: bool,
    rid_next: u32,
    has_process: bool,
    last_pid: Option<u32>,
    cur_run: u64,
    max_run: u64,
}

impl<'a> Engine<'a> {
    /// Callers must have validated `spec`; construction trusts it.
    pub(super) fn new(spec: &'a ScenarioSpec) -> Self {
        let mapping = AddressMapping::canonical(&spec.config).expect("validated config");
        let cs = ConfigSpace::new(
            spec.config_space.base,
            spec.config_space.size,
            spec.config.cacheline_bytes,
        )
        .expect("validated config space");
        let line = spec.config.cacheline_bytes as u64;

        let chans = (0..spec.channels)
            .map(|_| Channel {
                cmds: Vec::new(),
                open_rows: vec![None; spec.config.bank_count as usize],
            })
            .collect();

        let mut engine = Engine {
            spec,
            line,
            step: spec.cycle_step as u64,
            clock: spec.start_cycle,
            mapping,
            cs,
            chans,
            actors: Vec::new(),
            event_actors: Vec::new(),
            refs: Vec::new(),
            events: Vec::new(),
            page_journal: Vec::new(),
            dma_journal: Vec::new(),
            expect: ExpectedStats::default(),
            in_window: true,
            rid_next: 0,
            has_process: false,
            last_pid: None,
            cur_run: 0,
            max_run: 0,
        };

        for (idx, actor) in spec.actors.iter().enumerate() {
            engine.add_actor(idx, actor);
        }
        // A scripted BEGIN_TRACING means the trace starts outside a window.
        engine.in_window = !engine.event_actors.iter().any(|e| e.offset == 0);

        // Only a lone fixed-stride walker has a stride set worth pinning,
        // and only once it is long enough to register as a stream at all.
        engine.expect.expected_strides = match engine.actors.as_slice() {
            [RefActor::Sequential { stride, count, .. }]
                if *count >= crate::analyze::streams::StreamConfig::default().min_len as u64 =>
            {
                Some(BTreeSet::from([*stride / line as i64]))
            }
            _ => None,
        };
        engine
    }

    fn add_actor(&mut self, idx: usize, actor: &ActorSpec) {
        match *actor {
            ActorSpec::Sequential { start, count, stride, write_every, channel } => {
                self.actors.push(RefActor::Sequential {
                    start,
                    count,
                    stride,
                    write_every,
                    channel,
                    emitted: 0,
                });
            }
            ActorSpec::Random { count, range_start, range_len, write_every, channel } => {
                self.actors.push(RefActor::Random {
                    range_start,
                    lines: range_len / self.line,
                    count,
                    write_every,
                    channel,
                    rng: actor_rng(self.spec.seed, idx, 0),
                    emitted: 0,
                });
            }
            ActorSpec::Process {
                pid,
                virt_start,
                pattern,
                map,
                phys_page_start,
                unmapped_every,
                write_every,
                channel,
            } => {
                self.has_process = true;
                let pages = actor.mapped_page_count(self.line).expect("validated footprint");
                let mut offsets: Vec<u64> = (0..pages).collect();
                if map == MapLayout::Shuffled {
                    let mut rng = actor_rng(self.spec.seed, idx, 1);
                    for i in (1..offsets.len()).rev() {
                        let j = rng.gen_range(0..=i);
                        offsets.swap(i, j);
                    }
                }
                let page_map: Vec<u64> =
                    offsets.iter().map(|o| phys_page_start + o).collect();
                for (k, &phys_page) in page_map.iter().enumerate() {
                    let virt_page = virt_start / PAGE_BYTES + k as u64;
                    self.page_journal.push(PageMapping {
                        cycle: 0,
                        pid,
                        virt_page,
                        phys_page,
                        pte_addr: PTE_REGION_BASE + virt_page * 8,
                    });
                }
                let kind = match pattern {
                    super::AccessPattern::Walk { count, stride } => {
                        ProcKind::Walk { count, stride: stride as u64 }
                    }
                    super::AccessPattern::Quicksort { elements, element_bytes } => {
                        let mut rng = actor_rng(self.spec.seed, idx, 0);
                        ProcKind::Sorted {
                            acc: quicksort_accesses(elements, &mut rng),
                            element_bytes: element_bytes as u64,
                        }
                    }
                };
                self.actors.push(RefActor::Process {
                    pid,
                    virt_start,
                    page_map,
                    reserved_page: phys_page_start + pages,
                    unmapped_every,
                    write_every,
                    channel,
                    kind,
                    emitted: 0,
                    miss_rotor: 0,
                });
            }
            ActorSpec::Dma { owner, dir, buf_start, buf_size, begin_cycle, repeat, channel } => {
                self.actors.push(RefActor::Dma {
                    owner,
                    dir,
                    buf_start,
                    buf_size,
                    begin_cycle,
                    remaining: repeat,
                    channel,
                });
            }
            ActorSpec::Event { offset, at_cycle, channel } => {
                self.event_actors.push(EventActor { offset, at_cycle, channel, fired: false });
            }
        }
    }

    /// PRECHARGE/ACTIVATE as the row demands, then one column command;
    /// returns the column command's cycle.
    fn emit_access(&mut self, addr: u64, rw: Rw, channel: u16) -> u64 {
        let (row, bank, col) = self.mapping.decompose(addr);
        let ch = &mut self.chans[channel as usize];
        if ch.open_rows[bank as usize] != Some(row) {
            // Close any open row first; re-activating an active bank is a
            // protocol violation the decoder would flag.
            if ch.open_rows[bank as usize].is_some() {
                self.clock += self.step;
                ch.cmds.push(DdrCommand {
                    cycle: self.clock,
                    kind: CommandKind::Precharge,
                    bank,
                    row: 0,
                    col: 0,
                });
            }
            self.clock += self.step;
            ch.cmds.push(DdrCommand {
                cycle: self.clock,
                kind: CommandKind::Activate,
                bank,
                row,
                col: 0,
            });
            ch.open_rows[bank as usize] = Some(row);
        }
        self.clock += self.step;
        ch.cmds.push(DdrCommand {
            cycle: self.clock,
            kind: match rw {
                Rw::Read => CommandKind::Read,
                Rw::Write => CommandKind::Write,
            },
            bank,
            row,
            col,
        });
        self.clock
    }

    fn record_ref(
        &mut self,
        addr: u64,
        rw: Rw,
        channel: u16,
        pid: Option<u32>,
        virt: Option<u64>,
        dma_id: Option<u32>,
    ) {
        let addr = addr & !(self.line - 1);
        let cycle = self.emit_access(addr, rw, channel);
        let label = RefLabel::of(rw, dma_id.is_some());
        let r = LedgerRef {
            addr,
            cycle,
            channel,
            label,
            in_window: self.in_window,
            pid,
            virt,
            dma_id,
        };
        self.refs.push(r);
        self.expect.normal_refs += 1;
        if r.in_window {
            *self.expect.label_counts.entry(label).or_insert(0) += 1;
            if let Some(rid) = dma_id {
                *self.expect.per_request_bytes.entry(rid).or_insert(0) += self.line;
            }
        } else {
            self.expect.out_of_window += 1;
        }
        match pid {
            Some(p) => {
                self.expect.translated += 1;
                if self.last_pid == Some(p) {
                    self.cur_run += 1;
                } else {
                    self.max_run = self.max_run.max(self.cur_run);
                    self.cur_run = 1;
                    self.last_pid = Some(p);
                }
            }
            // Dropped by translation, so it does not break a pid run.
            None => self.expect.translation_misses += 1,
        }
    }

    fn emit_event_slot(&mut self, slot: u64, channel: u16) -> u64 {
        let addr = self.cs.slot_addr(slot);
        let cycle = self.emit_access(addr, Rw::Read, channel);
        let kind = match slot {
            0 => EventKind::BeginTracing,
            1 => EventKind::EndTracing,
            2 => EventKind::InsertMarker,
            s => EventKind::User((s - USER_SLOT_BASE) as u32),
        };
        match kind {
            EventKind::BeginTracing => self.in_window = true,
            EventKind::EndTracing => self.in_window = false,
            _ => {}
        }
        self.events.push(SemanticEvent { kind, cycle, channel });
        self.expect.event_count += 1;
        cycle
    }

    /// Fire every scripted event due at the next command boundary, in
    /// (at_cycle, actor order).
    fn flush_due_events(&mut self) {
        loop {
            let due = self
                .event_actors
                .iter()
                .enumerate()
                .filter(|(_, e)| !e.fired && e.at_cycle <= self.clock + self.step)
                .min_by_key(|(i, e)| (e.at_cycle, *i));
            let Some((i, _)) = due else { break };
            self.event_actors[i].fired = true;
            let (offset, channel) = (self.event_actors[i].offset, self.event_actors[i].channel);
            self.emit_event_slot(offset / self.line, channel);
        }
    }

    /// One reference for a CPU-side actor; false when it has none left.
    fn step_actor(&mut self, i: usize) -> bool {
        self.flush_due_events();
        struct Next {
            addr: u64,
            rw: Rw,
            channel: u16,
            pid: Option<u32>,
            virt: Option<u64>,
        }
        let next = match &mut self.actors[i] {
            RefActor::Sequential { start, count, stride, write_every, channel, emitted } => {
                if emitted >= count {
                    return false;
                }
                let addr = (*start as i128 + *emitted as i128 * *stride as i128) as u64;
                let n = Next {
                    addr,
                    rw: rw_for(*write_every, *emitted),
                    channel: *channel,
                    pid: None,
                    virt: None,
                };
                *emitted += 1;
                n
            }
            RefActor::Random { range_start, lines, count, write_every, channel, rng, emitted } => {
                if emitted >= count {
                    return false;
                }
                let addr = *range_start + rng.gen_range(0..*lines) * self.line;
                let n = Next {
                    addr,
                    rw: rw_for(*write_every, *emitted),
                    channel: *channel,
                    pid: None,
                    virt: None,
                };
                *emitted += 1;
                n
            }
            RefActor::Process {
                pid,
                virt_start,
                page_map,
                reserved_page,
                unmapped_every,
                write_every,
                channel,
                kind,
                emitted,
                miss_rotor,
            } => {
                let (vaddr, rw) = match kind {
                    ProcKind::Walk { count, stride } => {
                        if emitted >= count {
                            return false;
                        }
                        (*virt_start + *emitted * *stride, rw_for(*write_every, *emitted))
                    }
                    ProcKind::Sorted { acc, element_bytes } => {
                        let Some(&(elem, rw)) = acc.get(*emitted as usize) else {
                            return false;
                        };
                        (*virt_start + elem as u64 * *element_bytes, rw)
                    }
                };
                let idx = *emitted;
                *emitted += 1;
                if *unmapped_every > 0 && (idx + 1) % *unmapped_every == 0 {
                    let addr =
                        *reserved_page * PAGE_BYTES + (*miss_rotor * self.line) % PAGE_BYTES;
                    *miss_rotor += 1;
                    Next { addr, rw, channel: *channel, pid: None, virt: None }
                } else {
                    let page_idx = ((vaddr - *virt_start) / PAGE_BYTES) as usize;
                    let addr = page_map[page_idx] * PAGE_BYTES + vaddr % PAGE_BYTES;
                    Next {
                        addr,
                        rw,
                        channel: *channel,
                        pid: Some(*pid),
                        virt: Some(vaddr & !(self.line - 1)),
                    }
                }
            }
            RefActor::Dma { .. } => unreachable!("DMA turns bypass step_actor"),
        };
        self.record_ref(next.addr, next.rw, next.channel, next.pid, next.virt, None);
        true
    }

    /// One full request: begin tag, whole buffer, end tag. The device owns
    /// the bus for the duration, so scripted events wait for the boundary.
    fn do_dma_request(&mut self, i: usize) {
        self.flush_due_events();
        let RefActor::Dma { owner, dir, buf_start, buf_size, remaining, channel, .. } =
            &mut self.actors[i]
        else {
            unreachable!("caller matched a DMA actor");
        };
        *remaining -= 1;
        let (owner, dir, buf_start, buf_size, channel) =
            (*owner, *dir, *buf_start, *buf_size, *channel);

        let rid = self.rid_next;
        self.rid_next += 1;
        let cycle_begin =
            self.emit_event_slot(USER_SLOT_BASE + (DMA_BEGIN_TAG_BASE + rid) as u64, channel);
        let rw = match dir {
            DmaDir::Read => Rw::Read,
            DmaDir::Write => Rw::Write,
        };
        for k in 0..buf_size / self.line {
            self.record_ref(buf_start + k * self.line, rw, channel, None, None, Some(rid));
        }
        let cycle_end =
            self.emit_event_slot(USER_SLOT_BASE + (DMA_END_TAG_BASE + rid) as u64, channel);
        self.dma_journal.push(DmaRequest {
            id: rid,
            owner,
            dir,
            buf_start,
            buf_size,
            cycle_begin,
            cycle_end,
        });
        *self.expect.dma_request_sizes.entry(buf_size).or_insert(0) += 1;
    }

    fn try_turn(&mut self, i: usize) -> Turn {
        if let RefActor::Dma { begin_cycle, .. } = self.actors[i] {
            if self.clock < begin_cycle {
                return Turn::Waiting(begin_cycle);
            }
            self.do_dma_request(i);
            return Turn::Acted;
        }
        for _ in 0..self.spec.quantum {
            if !self.step_actor(i) {
                break;
            }
        }
        Turn::Acted
    }

    pub(super) fn run(mut self) -> GeneratedScenario {
        let mut alive: Vec<usize> = (0..self.actors.len()).collect();
        loop {
            alive.retain(|&i| !self.actors[i].exhausted());
            if alive.is_empty() {
                break;
            }
            let mut acted = false;
            let mut min_wait: Option<u64> = None;
            for idx in 0..alive.len() {
                let i = alive[idx];
                if self.actors[i].exhausted() {
                    continue;
                }
                match self.try_turn(i) {
                    Turn::Acted => acted = true,
                    Turn::Waiting(c) => {
                        min_wait = Some(min_wait.map_or(c, |m| m.min(c)));
                    }
                }
            }
            if !acted {
                match min_wait {
                    // Only dormant DMA left: jump to the earliest start.
                    Some(c) => self.clock = self.clock.max(c),
                    None => break,
                }
            }
        }

        // Late-scheduled events fire at their exact cycle when it is still
        // ahead of the clock.
        while let Some(i) = self
            .event_actors
            .iter()
            .enumerate()
            .filter(|(_, e)| !e.fired)
            .min_by_key(|(i, e)| (e.at_cycle, *i))
            .map(|(i, _)| i)
        {
            let e = &self.event_actors[i];
            let (offset, at_cycle, channel) = (e.offset, e.at_cycle, e.channel);
            self.clock = self.clock.max(at_cycle.saturating_sub(self.step));
            self.event_actors[i].fired = true;
            self.emit_event_slot(offset / self.line, channel);
        }

        self.max_run = self.max_run.max(self.cur_run);
        self.expect.max_pid_run = self.has_process.then_some(self.max_run);

        let ledger = GroundTruthLedger {
            name: self.spec.name.clone(),
            seed: self.spec.seed,
            config: self.spec.config,
            config_space: self.spec.config_space,
            quantum: self.spec.quantum,
            cycle_step: self.spec.cycle_step,
            refs: self.refs,
            events: self.events,
            page_journal: self.page_journal,
            unmaps: Vec::new(),
            dma_journal: self.dma_journal,
            expect: self.expect,
        };
        GeneratedScenario {
            commands: self.chans.into_iter().map(|c| c.cmds).collect(),
            ledger,
        }
    }
}
