//! DDR command stream decode.
//!
//! A snooped command stream is reduced to cacheline references by a per-bank
//! state machine with two states: `IDLE` and `ACTIVE(open_row)`. ACTIVATE
//! opens a row, PRECHARGE closes it, and every READ/WRITE on an active bank
//! yields exactly one [`PhysRef`] composed from `(open_row, bank, col)`.
//! Because the column field is cacheline-granular (see
//! [`AddressMapping`](crate::config::AddressMapping)), burst-beat address
//! suppression needs no extra logic: there is nothing below cacheline
//! granularity to suppress.
//!
//! Real controllers also sit in refresh/precharging sub-states; none of those
//! change which cachelines move, so they fold into the two states kept here.
//! Commands we do not model (refresh, mode register writes, NOPs) arrive as
//! [`CommandKind::Other`] and are counted but otherwise ignored.
//!
//! Malformed input degrades to [`DecodeWarning`]s, never errors: a column
//! command to an idle bank is dropped with `UnmatchedColumnCommand`, an
//! ACTIVATE to an already-active bank is treated as an implicit
//! precharge-then-activate with `ImplicitRowSwitch`.

use crate::config::AddressMapping;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CommandKind {
    Activate,
    Read,
    Write,
    Precharge,
    /// Anything else on the bus (refresh, MRS, ...): counted, never decoded.
    Other,
}

/// One command as captured off the bus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DdrCommand {
    pub cycle: u64,
    pub kind: CommandKind,
    pub bank: u16,
    /// Row address; meaningful for ACTIVATE only.
    pub row: u32,
    /// Cacheline-granular column address; meaningful for READ/WRITE only.
    pub col: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rw {
    Read,
    Write,
}

/// One cacheline reference recovered from the command stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhysRef {
    /// Physical byte address, cacheline-aligned.
    pub addr: u64,
    pub rw: Rw,
    pub cycle: u64,
    pub channel: u16,
}

/// Open-row state per bank; `None` is idle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BankStates(Vec<Option<u32>>);

impl BankStates {
    pub fn new(bank_count: u16) -> Self {
        BankStates(vec![None; bank_count as usize])
    }

    pub fn open_row(&self, bank: u16) -> Option<u32> {
        self.0.get(bank as usize).copied().flatten()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeWarning {
    /// READ/WRITE while the bank had no open row; the command is dropped.
    UnmatchedColumnCommand { bank: u16, cycle: u64 },
    /// ACTIVATE on an already-active bank; treated as precharge + activate.
    ImplicitRowSwitch { bank: u16, cycle: u64 },
    /// A command field exceeds the configured geometry; the command is dropped.
    FieldOutOfRange { bank: u16, cycle: u64 },
    /// Command cycle went backwards relative to its predecessor.
    NonMonotonicCycle { cycle: u64 },
}

/// Tallies from one decode pass. Warnings are counted by kind; the first few
/// are kept verbatim for diagnostics.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct DecodeStats {
    pub commands: u64,
    pub activates: u64,
    pub reads: u64,
    pub writes: u64,
    pub precharges: u64,
    pub others: u64,
    pub refs_emitted: u64,
    pub unmatched_column: u64,
    pub implicit_row_switch: u64,
    pub field_out_of_range: u64,
    pub non_monotonic_cycle: u64,
    #[serde(skip)]
    pub first_warnings: Vec<DecodeWarning>,
}

impl DecodeStats {
    pub const KEPT_WARNINGS: usize = 16;

    pub fn total_warnings(&self) -> u64 {
        self.unmatched_column + self.implicit_row_switch + self.field_out_of_range + self.non_monotonic_cycle
    }

    fn record(&mut self, w: DecodeWarning) {
        match w {
            DecodeWarning::UnmatchedColumnCommand { .. } => self.unmatched_column += 1,
            DecodeWarning::ImplicitRowSwitch { .. } => self.implicit_row_switch += 1,
            DecodeWarning::FieldOutOfRange { .. } => self.field_out_of_range += 1,
            DecodeWarning::NonMonotonicCycle { .. } => self.non_monotonic_cycle += 1,
        }
        if self.first_warnings.len() < Self::KEPT_WARNINGS {
            self.first_warnings.push(w);
        }
    }
}

/// Apply one command to the bank state.
///
/// Returns the reference it produced, if any, and the warning it raised, if
/// any. Field validation against `mapping` happens here so a corrupt capture
/// cannot poison the composed addresses.
pub fn step_state_machine(
    states: &mut BankStates,
    cmd: &DdrCommand,
    mapping: &AddressMapping,
    channel: u16,
) -> (Option<PhysRef>, Option<DecodeWarning>) {
    let bank = cmd.bank as usize;
    if bank >= states.0.len() {
        return (
            None,
            Some(DecodeWarning::FieldOutOfRange {
                bank: cmd.bank,
                cycle: cmd.cycle,
            }),
        );
    }
    match cmd.kind {
        CommandKind::Activate => {
            let prev = states.0[bank].replace(cmd.row);
            let warn = prev.map(|_| DecodeWarning::ImplicitRowSwitch {
                bank: cmd.bank,
                cycle: cmd.cycle,
            });
            (None, warn)
        }
        CommandKind::Precharge => {
            states.0[bank] = None;
            (None, None)
        }
        CommandKind::Other => (None, None),
        CommandKind::Read | CommandKind::Write => {
            let Some(row) = states.0[bank] else {
                return (
                    None,
                    Some(DecodeWarning::UnmatchedColumnCommand {
                        bank: cmd.bank,
                        cycle: cmd.cycle,
                    }),
                );
            };
            match mapping.compose(row, cmd.bank, cmd.col) {
                Ok(addr) => {
                    let rw = if cmd.kind == CommandKind::Read { Rw::Read } else { Rw::Write };
                    (
                        Some(PhysRef {
                            addr,
                            rw,
                            cycle: cmd.cycle,
                            channel,
                        }),
                        None,
                    )
                }
                Err(_) => (
                    None,
                    Some(DecodeWarning::FieldOutOfRange {
                        bank: cmd.bank,
                        cycle: cmd.cycle,
                    }),
                ),
            }
        }
    }
}

/// Decode a whole command stream for one channel.
///
/// Emitted reference cycles are non-decreasing whenever the input is; a cycle
/// regression is tallied as `NonMonotonicCycle` and decode continues.
pub fn decode_command_stream(
    cmds: impl IntoIterator<Item = DdrCommand>,
    mapping: &AddressMapping,
    bank_count: u16,
    channel: u16,
) -> (Vec<PhysRef>, DecodeStats) {
    let mut states = BankStates::new(bank_count);
    let mut refs = Vec::new();
    let mut stats = DecodeStats::default();
    let mut prev_cycle = None;
    for cmd in cmds {
        stats.commands += 1;
        match cmd.kind {
            CommandKind::Activate => stats.activates += 1,
            CommandKind::Read => stats.reads += 1,
            CommandKind::Write => stats.writes += 1,
            CommandKind::Precharge => stats.precharges += 1,
            CommandKind::Other => stats.others += 1,
        }
        if let Some(prev) = prev_cycle {
            if cmd.cycle < prev {
                stats.record(DecodeWarning::NonMonotonicCycle { cycle: cmd.cycle });
            }
        }
        prev_cycle = Some(cmd.cycle);
        let (r, w) = step_state_machine(&mut states, &cmd, mapping, channel);
        if let Some(r) = r {
            stats.refs_emitted += 1;
            refs.push(r);
        }
        if let Some(w) = w {
            stats.record(w);
        }
    }
    (refs, stats)
}
