//! `.hmtc` command capture files.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic "HMTC" │ version u16 │ MemConfig block (16 B)          22-byte header
//! cycle u64 │ kind u8 │ bank u8 │ row u32 │ col u16            16 B per command
//! ```
//!
//! Command kinds on disk: 0 ACTIVATE, 1 READ, 2 WRITE, 3 PRECHARGE, 4 OTHER.
//! The narrow bank/col fields bound what a capture can express (256 banks,
//! 64Ki columns); writing a command beyond them is an error rather than a
//! silent truncation.

use crate::config::MemConfig;
use crate::ddr::{CommandKind, DdrCommand};
use crate::io::{ReadRecords, RecordReadError};
use std::io::{Read, Write};
use thiserror::Error;

pub const HMTC_MAGIC: [u8; 4] = *b"HMTC";
pub const HMTC_VERSION: u16 = 1;
pub const HMTC_HEADER_BYTES: usize = 22;
pub const HMTC_RECORD_BYTES: usize = 16;

#[derive(Debug, Error)]
pub enum HmtcError {
    #[error("bad magic {0:02x?}, expected \"HMTC\"")]
    BadMagic([u8; 4]),
    #[error("unsupported command-file version {0}")]
    BadVersion(u16),
    #[error("file ends mid-{0}")]
    Truncated(&'static str),
    #[error("unknown command kind byte {0}")]
    UnknownCommandKind(u8),
    #[error("{field} {value} does not fit the on-disk field")]
    FieldTooWide { field: &'static str, value: u64 },
    #[error("header: {0}")]
    BadConfig(#[from] crate::config::ConfigError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn kind_byte(k: CommandKind) -> u8 {
    match k {
        CommandKind::Activate => 0,
        CommandKind::Read => 1,
        CommandKind::Write => 2,
        CommandKind::Precharge => 3,
        CommandKind::Other => 4,
    }
}

fn byte_kind(b: u8) -> Result<CommandKind, HmtcError> {
    Ok(match b {
        0 => CommandKind::Activate,
        1 => CommandKind::Read,
        2 => CommandKind::Write,
        3 => CommandKind::Precharge,
        4 => CommandKind::Other,
        other => return Err(HmtcError::UnknownCommandKind(other)),
    })
}

pub fn write_header(w: &mut impl Write, config: &MemConfig) -> Result<(), HmtcError> {
    config.validate()?;
    w.write_all(&HMTC_MAGIC)?;
    w.write_all(&HMTC_VERSION.to_le_bytes())?;
    super::write_mem_config(w, config)?;
    Ok(())
}

pub fn write_command(w: &mut impl Write, cmd: &DdrCommand) -> Result<(), HmtcError> {
    if cmd.bank > u8::MAX as u16 {
        return Err(HmtcError::FieldTooWide { field: "bank", value: cmd.bank as u64 });
    }
    if cmd.col > u16::MAX as u32 {
        return Err(HmtcError::FieldTooWide { field: "col", value: cmd.col as u64 });
    }
    w.write_all(&cmd.cycle.to_le_bytes())?;
    w.write_all(&[kind_byte(cmd.kind), cmd.bank as u8])?;
    w.write_all(&cmd.row.to_le_bytes())?;
    w.write_all(&(cmd.col as u16).to_le_bytes())?;
    Ok(())
}

/// Write a complete capture; returns the number of commands written.
pub fn write_commands(
    w: &mut impl Write,
    config: &MemConfig,
    cmds: impl IntoIterator<Item = DdrCommand>,
) -> Result<u64, HmtcError> {
    write_header(w, config)?;
    let mut n = 0;
    for cmd in cmds {
        write_command(w, &cmd)?;
        n += 1;
    }
    w.flush()?;
    Ok(n)
}

pub struct CommandReader<R: Read> {
    records: ReadRecords<R, HMTC_RECORD_BYTES>,
    config: MemConfig,
}

impl<R: Read> CommandReader<R> {
    pub fn new(mut r: R) -> Result<Self, HmtcError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|_| HmtcError::Truncated("header"))?;
        if magic != HMTC_MAGIC {
            return Err(HmtcError::BadMagic(magic));
        }
        let mut rest = [0u8; HMTC_HEADER_BYTES - 4];
        r.read_exact(&mut rest).map_err(|_| HmtcError::Truncated("header"))?;
        let version = u16::from_le_bytes([rest[0], rest[1]]);
        if version != HMTC_VERSION {
            return Err(HmtcError::BadVersion(version));
        }
        let config = super::read_mem_config(&rest[2..18]);
        config.validate()?;
        Ok(CommandReader { records: ReadRecords::new(r), config })
    }

    pub fn config(&self) -> &MemConfig {
        &self.config
    }
}

impl<R: Read> Iterator for CommandReader<R> {
    type Item = Result<DdrCommand, HmtcError>;

    fn next(&mut self) -> Option<Self::Item> {
        let rec = match self.records.next_record() {
            Ok(Some(rec)) => rec,
            Ok(None) => return None,
            Err(RecordReadError::Truncated) => return Some(Err(HmtcError::Truncated("record"))),
            Err(RecordReadError::Io(e)) => return Some(Err(e.into())),
        };
        let kind = match byte_kind(rec[8]) {
            Ok(k) => k,
            Err(e) => return Some(Err(e)),
        };
        Some(Ok(DdrCommand {
            cycle: u64::from_le_bytes(rec[0..8].try_into().unwrap()),
            kind,
            bank: rec[9] as u16,
            row: u32::from_le_bytes(rec[10..14].try_into().unwrap()),
            col: u16::from_le_bytes(rec[14..16].try_into().unwrap()) as u32,
        }))
    }
}

/// Read a complete capture into memory.
pub fn read_commands(r: impl Read) -> Result<(MemConfig, Vec<DdrCommand>), HmtcError> {
    let mut reader = CommandReader::new(r)?;
    let config = *reader.config();
    let cmds = reader.by_ref().collect::<Result<Vec<_>, _>>()?;
    Ok((config, cmds))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cmds() -> Vec<DdrCommand> {
        vec![
            DdrCommand { cycle: 0, kind: CommandKind::Activate, bank: 1, row: 0x1fff, col: 0 },
            DdrCommand { cycle: 4, kind: CommandKind::Read, bank: 1, row: 0, col: 0x3ff },
            DdrCommand { cycle: 8, kind: CommandKind::Write, bank: 1, row: 0, col: 2 },
            DdrCommand { cycle: 12, kind: CommandKind::Precharge, bank: 1, row: 0, col: 0 },
            DdrCommand { cycle: 16, kind: CommandKind::Other, bank: 0, row: 0, col: 0 },
        ]
    }

    #[test]
    fn capture_round_trips() {
        let mut buf = Vec::new();
        let n = write_commands(&mut buf, &MemConfig::ddr200(), cmds()).unwrap();
        assert_eq!(n, 5);
        assert_eq!(buf.len(), HMTC_HEADER_BYTES + 5 * HMTC_RECORD_BYTES);
        let (config, back) = read_commands(&buf[..]).unwrap();
        assert_eq!(config, MemConfig::ddr200());
        assert_eq!(back, cmds());
    }

    #[test]
    fn bad_magic_and_truncation() {
        let mut buf = Vec::new();
        write_commands(&mut buf, &MemConfig::ddr200(), cmds()).unwrap();
        let mut evil = buf.clone();
        evil[1] = b'X';
        assert!(matches!(read_commands(&evil[..]), Err(HmtcError::BadMagic(_))));
        assert!(matches!(
            read_commands(&buf[..buf.len() - 3]),
            Err(HmtcError::Truncated("record"))
        ));
        assert!(matches!(
            read_commands(&buf[..10]),
            Err(HmtcError::Truncated("header"))
        ));
    }

    #[test]
    fn unknown_kind_byte_is_rejected() {
        let mut buf = Vec::new();
        write_commands(&mut buf, &MemConfig::ddr200(), cmds()).unwrap();
        buf[HMTC_HEADER_BYTES + 8] = 9;
        assert!(matches!(
            read_commands(&buf[..]),
            Err(HmtcError::UnknownCommandKind(9))
        ));
    }

    #[test]
    fn wide_fields_rejected_on_write() {
        let mut buf = Vec::new();
        write_header(&mut buf, &MemConfig::ddr200()).unwrap();
        let wide = DdrCommand { cycle: 0, kind: CommandKind::Read, bank: 300, row: 0, col: 0 };
        assert!(matches!(
            write_command(&mut buf, &wide),
            Err(HmtcError::FieldTooWide { field: "bank", .. })
        ));
    }
}
