//! File formats around the core types.
//!
//! Binary containers ([`hmtc`] command captures, [`refs`] decoded-reference
//! files) share the little-endian 16-byte [`MemConfig`] block so every
//! artifact carries the geometry it was produced under. Journals are
//! line-delimited JSON ([`journal`]).

pub mod hmtc;
pub mod journal;
pub mod refs;

use crate::config::MemConfig;
use std::io::{Read, Write};

#[derive(Debug)]
pub enum RecordReadError {
    /// EOF inside a record.
    Truncated,
    Io(std::io::Error),
}

/// Fill `buf` completely, or report a clean EOF before the first byte.
pub(crate) fn read_full_or_eof(
    r: &mut impl Read,
    buf: &mut [u8],
) -> Result<Option<()>, RecordReadError> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => {
                return if filled == 0 {
                    Ok(None)
                } else {
                    Err(RecordReadError::Truncated)
                }
            }
            Ok(n) => filled += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(RecordReadError::Io(e)),
        }
    }
    Ok(Some(()))
}

/// Reader of fixed-width records that distinguishes end-of-stream from a cut
/// record.
pub(crate) struct ReadRecords<R, const N: usize> {
    r: R,
}

impl<R: Read, const N: usize> ReadRecords<R, N> {
    pub fn new(r: R) -> Self {
        ReadRecords { r }
    }

    pub fn next_record(&mut self) -> Result<Option<[u8; N]>, RecordReadError> {
        let mut buf = [0u8; N];
        Ok(read_full_or_eof(&mut self.r, &mut buf)?.map(|()| buf))
    }
}

/// 16-byte little-endian geometry block shared by all binary headers.
pub(crate) fn write_mem_config(w: &mut impl Write, c: &MemConfig) -> std::io::Result<()> {
    w.write_all(&c.freq_mhz.to_le_bytes())?;
    w.write_all(&c.bus_width_bits.to_le_bytes())?;
    w.write_all(&c.cacheline_bytes.to_le_bytes())?;
    w.write_all(&[c.burst_length, c.tccd])?;
    w.write_all(&c.bank_count.to_le_bytes())?;
    w.write_all(&[c.row_bits, c.col_bits])?;
    Ok(())
}

/// Inverse of [`write_mem_config`]; `buf` must be exactly 16 bytes.
pub(crate) fn read_mem_config(buf: &[u8]) -> MemConfig {
    assert_eq!(buf.len(), 16);
    MemConfig {
        freq_mhz: u32::from_le_bytes(buf[0..4].try_into().unwrap()),
        bus_width_bits: u16::from_le_bytes(buf[4..6].try_into().unwrap()),
        cacheline_bytes: u32::from_le_bytes(buf[6..10].try_into().unwrap()),
        burst_length: buf[10],
        tccd: buf[11],
        bank_count: u16::from_le_bytes(buf[12..14].try_into().unwrap()),
        row_bits: buf[14],
        col_bits: buf[15],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mem_config_block_round_trips() {
        let c = MemConfig::ddr2_400();
        let mut buf = Vec::new();
        write_mem_config(&mut buf, &c).unwrap();
        assert_eq!(buf.len(), 16);
        assert_eq!(read_mem_config(&buf), c);
    }

    #[test]
    fn record_reader_flags_partial_tail() {
        let mut rr: ReadRecords<_, 4> = ReadRecords::new(&[1u8, 2, 3, 4, 5][..]);
        assert_eq!(rr.next_record().unwrap(), Some([1, 2, 3, 4]));
        assert!(matches!(rr.next_record(), Err(RecordReadError::Truncated)));
        let mut clean: ReadRecords<_, 4> = ReadRecords::new(&[1u8, 2, 3, 4][..]);
        assert_eq!(clean.next_record().unwrap(), Some([1, 2, 3, 4]));
        assert_eq!(clean.next_record().unwrap(), None);
    }
}
