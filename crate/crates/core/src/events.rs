//! Config-space event decode and session windows.
//!
//! A reserved physical window (the "config space") turns ordinary reads into
//! messages: software touches `base + offset` and the trace later shows a
//! reference there. Slots are one cacheline wide, so slot `k` sits at byte
//! offset `k · cacheline`. Slot numbers are what is canonical; with 64-byte
//! lines they land on the classic byte offsets:
//!
//! ```text
//! slot 0  (0x0000)   BEGIN_TRACING
//! slot 1  (0x0040)   END_TRACING
//! slot 2  (0x0080)   INSERT_MARKER
//! slot 64 (0x1000)   first user event: USER(id) at slot 64 + id
//! ```
//!
//! A dictionary file can relocate the three inner commands and attach names
//! to user ids; user slots classify structurally (`USER(slot - 64)`) whether
//! named or not. A reference into the inner region whose slot has no
//! dictionary entry classifies as an INSERT_MARKER and is reported as an
//! [`OverlayWarning::UnknownSlot`].
//!
//! Classification depends only on the address, never on read vs write: the
//! address is the message.

use crate::ddr::PhysRef;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// First user-event slot: byte offset 0x1000 at 64-byte lines.
pub const USER_SLOT_BASE: u64 = 64;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EventsError {
    #[error("config space base {base:#x} is not aligned to stride {stride:#x}")]
    UnalignedBase { base: u64, stride: u64 },
    #[error("config space size {size:#x} is not a multiple of stride {stride:#x}")]
    UnalignedSize { size: u64, stride: u64 },
    #[error("config space size {size:#x} cannot hold the inner region plus a user slot")]
    TooSmall { size: u64 },
    #[error("dictionary offset {offset:#x} is not a multiple of stride {stride:#x}")]
    UnalignedOffset { offset: u64, stride: u64 },
    #[error("dictionary offset key {0:?} is not hex")]
    BadOffsetKey(String),
    #[error("inner slot {slot} has non-command name {name:?}")]
    BadInnerName { slot: u64, name: String },
    #[error("dictionary is not a JSON object of {{offset_hex: name}}: {0}")]
    BadDictionary(String),
}

/// The reserved physical window and its slot stride.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigSpace {
    pub base: u64,
    pub size: u64,
    /// Slot width; the cacheline size.
    pub stride: u64,
}

impl ConfigSpace {
    pub fn new(base: u64, size: u64, cacheline_bytes: u32) -> Result<Self, EventsError> {
        let stride = cacheline_bytes as u64;
        if base % stride != 0 {
            return Err(EventsError::UnalignedBase { base, stride });
        }
        if size % stride != 0 {
            return Err(EventsError::UnalignedSize { size, stride });
        }
        // A non-empty window must reach past the inner region into at least
        // one user slot, or user events are impossible to express.
        if size != 0 && size < (USER_SLOT_BASE + 1) * stride {
            return Err(EventsError::TooSmall { size });
        }
        Ok(ConfigSpace { base, size, stride })
    }

    pub fn contains(&self, addr: u64) -> bool {
        addr >= self.base && addr < self.base + self.size
    }

    /// Byte offset of a slot index.
    pub fn slot_offset(&self, slot: u64) -> u64 {
        slot * self.stride
    }

    /// Physical address a read must hit to land in a slot.
    pub fn slot_addr(&self, slot: u64) -> u64 {
        self.base + self.slot_offset(slot)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerCommand {
    BeginTracing,
    EndTracing,
    InsertMarker,
}

/// Slot assignments: inner commands by slot, display names for user ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventDictionary {
    inner: BTreeMap<u64, InnerCommand>,
    user_names: BTreeMap<u32, String>,
}

impl EventDictionary {
    /// Slots 0/1/2 as BEGIN/END/INSERT, no named user events.
    pub fn canonical() -> Self {
        let mut inner = BTreeMap::new();
        inner.insert(0, InnerCommand::BeginTracing);
        inner.insert(1, InnerCommand::EndTracing);
        inner.insert(2, InnerCommand::InsertMarker);
        EventDictionary { inner, user_names: BTreeMap::new() }
    }

    pub fn inner_command(&self, slot: u64) -> Option<InnerCommand> {
        self.inner.get(&slot).copied()
    }

    pub fn user_name(&self, id: u32) -> Option<&str> {
        self.user_names.get(&id).map(String::as_str)
    }

    pub fn name_user(&mut self, id: u32, name: impl Into<String>) {
        self.user_names.insert(id, name.into());
    }

    /// Parse the `{offset_hex: name}` dictionary format. Offsets are byte
    /// offsets interpreted against `stride`; inner-region names must be one
    /// of the three commands, user-region names are free-form.
    pub fn from_json(json: &str, stride: u64) -> Result<Self, EventsError> {
        let map: BTreeMap<String, String> = serde_json::from_str(json)
            .map_err(|e| EventsError::BadDictionary(e.to_string()))?;
        let mut dict = EventDictionary { inner: BTreeMap::new(), user_names: BTreeMap::new() };
        for (key, name) in map {
            let digits = key.strip_prefix("0x").or_else(|| key.strip_prefix("0X")).unwrap_or(&key);
            let offset = u64::from_str_radix(digits, 16)
                .map_err(|_| EventsError::BadOffsetKey(key.clone()))?;
            if offset % stride != 0 {
                return Err(EventsError::UnalignedOffset { offset, stride });
            }
            let slot = offset / stride;
            if slot < USER_SLOT_BASE {
                let cmd = match name.to_ascii_lowercase().as_str() {
                    "begin_tracing" => InnerCommand::BeginTracing,
                    "end_tracing" => InnerCommand::EndTracing,
                    "insert_marker" => InnerCommand::InsertMarker,
                    _ => return Err(EventsError::BadInnerName { slot, name }),
                };
                dict.inner.insert(slot, cmd);
            } else {
                dict.user_names.insert((slot - USER_SLOT_BASE) as u32, name);
            }
        }
        Ok(dict)
    }

    /// Inverse of [`from_json`](Self::from_json), keyed by byte offset.
    pub fn to_json(&self, stride: u64) -> String {
        let mut map = BTreeMap::new();
        for (slot, cmd) in &self.inner {
            let name = match cmd {
                InnerCommand::BeginTracing => "begin_tracing",
                InnerCommand::EndTracing => "end_tracing",
                InnerCommand::InsertMarker => "insert_marker",
            };
            map.insert(format!("{:#x}", slot * stride), name.to_string());
        }
        for (id, name) in &self.user_names {
            map.insert(
                format!("{:#x}", (USER_SLOT_BASE + *id as u64) * stride),
                name.clone(),
            );
        }
        serde_json::to_string_pretty(&map).expect("string map serializes")
    }
}

impl Default for EventDictionary {
    fn default() -> Self {
        Self::canonical()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "id")]
pub enum EventKind {
    BeginTracing,
    EndTracing,
    InsertMarker,
    User(u32),
}

impl EventKind {
    /// Slot index whose read produces this event under the canonical dictionary.
    pub fn slot(&self) -> u64 {
        match self {
            EventKind::BeginTracing => 0,
            EventKind::EndTracing => 1,
            EventKind::InsertMarker => 2,
            EventKind::User(id) => USER_SLOT_BASE + *id as u64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemanticEvent {
    #[serde(flatten)]
    pub kind: EventKind,
    pub cycle: u64,
    pub channel: u16,
}

/// What one reference means.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    /// Ordinary memory traffic.
    Normal,
    Event(EventKind),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OverlayWarning {
    /// Inner-region slot with no dictionary entry; classified INSERT_MARKER.
    UnknownSlot { offset: u64, cycle: u64 },
}

/// Classify one reference. Pure in `(addr, cs, dict)`; the r/w direction is
/// deliberately ignored.
pub fn classify_ref(
    r: &PhysRef,
    cs: &ConfigSpace,
    dict: &EventDictionary,
) -> (Classification, Option<OverlayWarning>) {
    if !cs.contains(r.addr) {
        return (Classification::Normal, None);
    }
    let offset = r.addr - cs.base;
    let slot = offset / cs.stride;
    if slot >= USER_SLOT_BASE {
        let id = (slot - USER_SLOT_BASE) as u32;
        return (Classification::Event(EventKind::User(id)), None);
    }
    match dict.inner_command(slot) {
        Some(InnerCommand::BeginTracing) => (Classification::Event(EventKind::BeginTracing), None),
        Some(InnerCommand::EndTracing) => (Classification::Event(EventKind::EndTracing), None),
        Some(InnerCommand::InsertMarker) => (Classification::Event(EventKind::InsertMarker), None),
        None => (
            Classification::Event(EventKind::InsertMarker),
            Some(OverlayWarning::UnknownSlot { offset, cycle: r.cycle }),
        ),
    }
}

/// Trace split into plain traffic and decoded events.
#[derive(Debug, Clone, Default)]
pub struct Overlay {
    pub normal: Vec<PhysRef>,
    pub events: Vec<SemanticEvent>,
    pub warnings: Vec<OverlayWarning>,
}

/// Partition a trace; `normal` and `events` together preserve every input
/// reference in order.
pub fn overlay(
    trace: impl IntoIterator<Item = PhysRef>,
    cs: &ConfigSpace,
    dict: &EventDictionary,
) -> Overlay {
    let mut out = Overlay::default();
    for r in trace {
        let (c, w) = classify_ref(&r, cs, dict);
        if let Some(w) = w {
            out.warnings.push(w);
        }
        match c {
            Classification::Normal => out.normal.push(r),
            Classification::Event(kind) => out.events.push(SemanticEvent {
                kind,
                cycle: r.cycle,
                channel: r.channel,
            }),
        }
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SessionWarnings {
    /// BEGIN while a window was already open; flattened to the outer window.
    pub nested_begin: u64,
    /// END with no window open; ignored.
    pub stray_end: u64,
}

/// Pair BEGIN/END markers into half-open `[begin, end)` cycle windows.
///
/// An unclosed trailing window ends at `u64::MAX`.
pub fn session_windows(events: &[SemanticEvent]) -> (Vec<(u64, u64)>, SessionWarnings) {
    let mut windows = Vec::new();
    let mut warnings = SessionWarnings::default();
    let mut open: Option<u64> = None;
    for e in events {
        match e.kind {
            EventKind::BeginTracing => {
                if open.is_some() {
                    warnings.nested_begin += 1;
                } else {
                    open = Some(e.cycle);
                }
            }
            EventKind::EndTracing => match open.take() {
                Some(begin) => windows.push((begin, e.cycle)),
                None => warnings.stray_end += 1,
            },
            _ => {}
        }
    }
    if let Some(begin) = open {
        windows.push((begin, u64::MAX));
    }
    (windows, warnings)
}
