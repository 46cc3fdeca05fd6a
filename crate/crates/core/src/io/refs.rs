//! `.refs` files: decoded references flowing between pipeline stages.
//!
//! Binary, little-endian, 24-byte header:
//!
//! ```text
//! magic "MREF" │ version u16 │ field flags u16 │ MemConfig block (16 B)
//! ```
//!
//! Every record starts `cycle u64 │ addr u64 │ rw u8 │ channel u16`; the
//! flags word appends optional per-ref annotations, each all-ones when absent
//! on a particular record:
//!
//! ```text
//! bit 0  pid u32        bit 2  label u8 (0 cpu_read, 1 cpu_write,
//! bit 1  virt u64              2 dma_read, 3 dma_write)
//!                       bit 3  dma_id u32
//! ```
//!
//! Stages only add annotations, so a downstream tool can always read an
//! upstream file.

use crate::config::MemConfig;
use crate::ddr::{PhysRef, Rw};
use crate::dma::RefLabel;
use crate::io::{read_full_or_eof, RecordReadError};
use std::io::{Read, Write};
use thiserror::Error;

pub const REFS_MAGIC: [u8; 4] = *b"MREF";
pub const REFS_VERSION: u16 = 1;
pub const REFS_HEADER_BYTES: usize = 24;

#[derive(Debug, Error)]
pub enum RefsError {
    #[error("bad magic {0:02x?}, expected \"MREF\"")]
    BadMagic([u8; 4]),
    #[error("unsupported refs-file version {0}")]
    BadVersion(u16),
    #[error("unknown field flags {0:#06x}")]
    BadFlags(u16),
    #[error("file ends mid-{0}")]
    Truncated(&'static str),
    #[error("unknown label byte {0}")]
    BadLabel(u8),
    #[error("record carries a field the file's flags do not enable")]
    FieldNotEnabled,
    #[error("header: {0}")]
    BadConfig(#[from] crate::config::ConfigError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which optional annotations a file carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RefFields {
    pub pid: bool,
    pub virt: bool,
    pub label: bool,
    pub dma_id: bool,
}

impl RefFields {
    pub const ALL: RefFields = RefFields { pid: true, virt: true, label: true, dma_id: true };

    fn to_bits(self) -> u16 {
        (self.pid as u16) | (self.virt as u16) << 1 | (self.label as u16) << 2 | (self.dma_id as u16) << 3
    }

    fn from_bits(bits: u16) -> Result<Self, RefsError> {
        if bits & !0xF != 0 {
            return Err(RefsError::BadFlags(bits));
        }
        Ok(RefFields {
            pid: bits & 1 != 0,
            virt: bits & 2 != 0,
            label: bits & 4 != 0,
            dma_id: bits & 8 != 0,
        })
    }

    fn record_bytes(self) -> usize {
        19 + if self.pid { 4 } else { 0 }
            + if self.virt { 8 } else { 0 }
            + if self.label { 1 } else { 0 }
            + if self.dma_id { 4 } else { 0 }
    }
}

/// One reference plus whatever annotations stages have attached.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RefRecord {
    pub phys: PhysRef,
    pub pid: Option<u32>,
    pub virt_addr: Option<u64>,
    pub label: Option<RefLabel>,
    pub dma_id: Option<u32>,
}

impl RefRecord {
    pub fn bare(phys: PhysRef) -> Self {
        RefRecord { phys, pid: None, virt_addr: None, label: None, dma_id: None }
    }
}

fn label_byte(l: RefLabel) -> u8 {
    match l {
        RefLabel::CpuRead => 0,
        RefLabel::CpuWrite => 1,
        RefLabel::DmaRead => 2,
        RefLabel::DmaWrite => 3,
    }
}

fn byte_label(b: u8) -> Result<Option<RefLabel>, RefsError> {
    Ok(Some(match b {
        0 => RefLabel::CpuRead,
        1 => RefLabel::CpuWrite,
        2 => RefLabel::DmaRead,
        3 => RefLabel::DmaWrite,
        0xFF => return Ok(None),
        other => return Err(RefsError::BadLabel(other)),
    }))
}

pub struct RefWriter<W: Write> {
    w: W,
    fields: RefFields,
    pub records_written: u64,
}

impl<W: Write> RefWriter<W> {
    pub fn new(mut w: W, config: &MemConfig, fields: RefFields) -> Result<Self, RefsError> {
        config.validate()?;
        w.write_all(&REFS_MAGIC)?;
        w.write_all(&REFS_VERSION.to_le_bytes())?;
        w.write_all(&fields.to_bits().to_le_bytes())?;
        super::write_mem_config(&mut w, config)?;
        Ok(RefWriter { w, fields, records_written: 0 })
    }

    pub fn write(&mut self, r: &RefRecord) -> Result<(), RefsError> {
        if (r.pid.is_some() && !self.fields.pid)
            || (r.virt_addr.is_some() && !self.fields.virt)
            || (r.label.is_some() && !self.fields.label)
            || (r.dma_id.is_some() && !self.fields.dma_id)
        {
            return Err(RefsError::FieldNotEnabled);
        }
        self.w.write_all(&r.phys.cycle.to_le_bytes())?;
        self.w.write_all(&r.phys.addr.to_le_bytes())?;
        self.w.write_all(&[(r.phys.rw == Rw::Write) as u8])?;
        self.w.write_all(&r.phys.channel.to_le_bytes())?;
        if self.fields.pid {
            self.w.write_all(&r.pid.unwrap_or(u32::MAX).to_le_bytes())?;
        }
        if self.fields.virt {
            self.w.write_all(&r.virt_addr.unwrap_or(u64::MAX).to_le_bytes())?;
        }
        if self.fields.label {
            self.w.write_all(&[r.label.map_or(0xFF, label_byte)])?;
        }
        if self.fields.dma_id {
            self.w.write_all(&r.dma_id.unwrap_or(u32::MAX).to_le_bytes())?;
        }
        self.records_written += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W, RefsError> {
        self.w.flush()?;
        Ok(self.w)
    }
}

pub struct RefReader<R: Read> {
    r: R,
    config: MemConfig,
    fields: RefFields,
    record_bytes: usize,
    done: bool,
}

impl<R: Read> RefReader<R> {
    pub fn new(mut r: R) -> Result<Self, RefsError> {
        let mut head = [0u8; REFS_HEADER_BYTES];
        r.read_exact(&mut head).map_err(|_| RefsError::Truncated("header"))?;
        let magic: [u8; 4] = head[0..4].try_into().unwrap();
        if magic != REFS_MAGIC {
            return Err(RefsError::BadMagic(magic));
        }
        let version = u16::from_le_bytes([head[4], head[5]]);
        if version != REFS_VERSION {
            return Err(RefsError::BadVersion(version));
        }
        let fields = RefFields::from_bits(u16::from_le_bytes([head[6], head[7]]))?;
        let config = super::read_mem_config(&head[8..24]);
        config.validate()?;
        Ok(RefReader {
            r,
            config,
            fields,
            record_bytes: fields.record_bytes(),
            done: false,
        })
    }

    pub fn config(&self) -> &MemConfig {
        &self.config
    }

    pub fn fields(&self) -> RefFields {
        self.fields
    }
}

impl<R: Read> Iterator for RefReader<R> {
    type Item = Result<RefRecord, RefsError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let mut buf = [0u8; 19 + 4 + 8 + 1 + 4];
        let buf = &mut buf[..self.record_bytes];
        match read_full_or_eof(&mut self.r, buf) {
            Ok(None) => {
                self.done = true;
                return None;
            }
            Ok(Some(())) => {}
            Err(RecordReadError::Truncated) => {
                self.done = true;
                return Some(Err(RefsError::Truncated("record")));
            }
            Err(RecordReadError::Io(e)) => {
                self.done = true;
                return Some(Err(e.into()));
            }
        }
        let phys = PhysRef {
            cycle: u64::from_le_bytes(buf[0..8].try_into().unwrap()),
            addr: u64::from_le_bytes(buf[8..16].try_into().unwrap()),
            rw: if buf[16] != 0 { Rw::Write } else { Rw::Read },
            channel: u16::from_le_bytes([buf[17], buf[18]]),
        };
        let mut at = 19;
        let mut take = |n: usize| {
            let s = &buf[at..at + n];
            at += n;
            s.to_vec()
        };
        let pid = self.fields.pid.then(|| u32::from_le_bytes(take(4).try_into().unwrap()));
        let virt = self.fields.virt.then(|| u64::from_le_bytes(take(8).try_into().unwrap()));
        let label_b = self.fields.label.then(|| take(1)[0]);
        let dma = self.fields.dma_id.then(|| u32::from_le_bytes(take(4).try_into().unwrap()));
        let label = match label_b.map_or(Ok(None), byte_label) {
            Ok(l) => l,
            Err(e) => {
                self.done = true;
                return Some(Err(e));
            }
        };
        Some(Ok(RefRecord {
            phys,
            pid: pid.filter(|&p| p != u32::MAX),
            virt_addr: virt.filter(|&v| v != u64::MAX),
            label,
            dma_id: dma.filter(|&d| d != u32::MAX),
        }))
    }
}

/// Write a whole refs file with exactly the fields any record uses.
pub fn write_refs(
    w: impl Write,
    config: &MemConfig,
    fields: RefFields,
    records: impl IntoIterator<Item = RefRecord>,
) -> Result<u64, RefsError> {
    let mut writer = RefWriter::new(w, config, fields)?;
    for r in records {
        writer.write(&r)?;
    }
    let n = writer.records_written;
    writer.finish()?;
    Ok(n)
}

pub fn read_refs(r: impl Read) -> Result<(MemConfig, RefFields, Vec<RefRecord>), RefsError> {
    let mut reader = RefReader::new(r)?;
    let config = *reader.config();
    let fields = reader.fields();
    let records = reader.by_ref().collect::<Result<Vec<_>, _>>()?;
    Ok((config, fields, records))
}
