//! Packed trace record format and the `.hmtt` container.
//!
//! References are delta-encoded against the previous reference's cycle and
//! packed into little-endian 32-bit words:
//!
//! ```text
//!  31 30           4 3    0
//! ┌──┬──┬───────────┬──────┐
//! │ 0│rw│ line index│ dlow │   reference: rw 1=write, 26-bit cacheline
//! └──┴──┴───────────┴──────┘   index, low 4 duration bits
//!  31 28            27     0
//! ┌──┬───┬─────────────────┐
//! │ 1│sub│     payload     │   escape: sub 0 = DURATION_HIGH, payload =
//! └──┴───┴─────────────────┘   duration >> 4; other subtypes reserved
//! ```
//!
//! A reference whose inter-arrival gap fits in 4 bits is one word; otherwise
//! a DURATION_HIGH escape carrying `duration >> 4` immediately precedes it.
//! An escape is never valid on its own: end-of-stream or a second escape
//! right after one is a [`TraceDecodeError::DanglingEscape`]. The first
//! reference's duration is measured from the header `epoch`, so absolute
//! cycles rebuild as a prefix sum over durations.
//!
//! 26 index bits at 64-byte lines span 4 GiB of physical memory; encoding a
//! reference beyond that is [`TraceEncodeError::AddressOverflow`], and a gap
//! of 2^32 cycles or more (payload would not fit the escape)
//! [`TraceEncodeError::DurationOverflow`].
//!
//! A `.hmtt` file is one 48-byte header followed by packed words, all
//! little-endian:
//!
//! ```text
//! magic "HMTT" │ version u16 │ channel_id u16 │ MemConfig block (16 B) │
//! epoch u64 │ config_space_base u64 │ config_space_size u64
//! ```

use crate::config::MemConfig;
use crate::ddr::{PhysRef, Rw};
use crate::io::{read_mem_config, write_mem_config, ReadRecords};
use std::io::{Read, Write};
use thiserror::Error;

pub const TRACE_MAGIC: [u8; 4] = *b"HMTT";
pub const TRACE_VERSION: u16 = 1;
pub const HEADER_BYTES: usize = 48;
/// Width of the cacheline-index field.
pub const INDEX_BITS: u32 = 26;
/// Width of the escape payload field.
pub const PAYLOAD_BITS: u32 = 28;

const KIND_BIT: u32 = 1 << 31;
const RW_BIT: u32 = 1 << 30;
const INDEX_MASK: u32 = (1 << INDEX_BITS) - 1;
const PAYLOAD_MASK: u32 = (1 << PAYLOAD_BITS) - 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceFileHeader {
    pub channel_id: u16,
    pub config: MemConfig,
    /// Cycle the first record's duration is measured from.
    pub epoch: u64,
    pub config_space_base: u64,
    pub config_space_size: u64,
}

#[derive(Debug, Error)]
pub enum TraceEncodeError {
    #[error("address {addr:#x} beyond the {INDEX_BITS}-bit cacheline index range")]
    AddressOverflow { addr: u64 },
    #[error("address {addr:#x} is not cacheline-aligned")]
    MisalignedAddress { addr: u64 },
    #[error("cycle {cycle} precedes previous cycle {prev}")]
    NonMonotonicCycle { cycle: u64, prev: u64 },
    #[error("inter-arrival gap {duration} does not fit {PAYLOAD_BITS}+4 duration bits")]
    DurationOverflow { duration: u64 },
    #[error("config_space_size {size:#x} is not a multiple of the cacheline")]
    BadConfigSpace { size: u64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum TraceDecodeError {
    #[error("bad magic {0:02x?}, expected \"HMTT\"")]
    BadMagic([u8; 4]),
    #[error("unsupported trace version {0}")]
    BadVersion(u16),
    #[error("stream ends mid-{0}")]
    TruncatedStream(&'static str),
    #[error("escape record not followed by a reference")]
    DanglingEscape,
    #[error("reserved escape subtype {0}")]
    ReservedEscapeSubtype(u8),
    #[error("header: {0}")]
    BadHeader(#[from] crate::config::ConfigError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn check_header(h: &TraceFileHeader) -> Result<(), TraceEncodeError> {
    if h.config_space_size % h.config.cacheline_bytes as u64 != 0 {
        return Err(TraceEncodeError::BadConfigSpace {
            size: h.config_space_size,
        });
    }
    Ok(())
}

pub fn write_header(w: &mut impl Write, h: &TraceFileHeader) -> Result<(), TraceEncodeError> {
    check_header(h)?;
    w.write_all(&TRACE_MAGIC)?;
    w.write_all(&TRACE_VERSION.to_le_bytes())?;
    w.write_all(&h.channel_id.to_le_bytes())?;
    write_mem_config(w, &h.config)?;
    w.write_all(&h.epoch.to_le_bytes())?;
    w.write_all(&h.config_space_base.to_le_bytes())?;
    w.write_all(&h.config_space_size.to_le_bytes())?;
    Ok(())
}

pub fn read_header(r: &mut impl Read) -> Result<TraceFileHeader, TraceDecodeError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| TraceDecodeError::TruncatedStream("header"))?;
    if magic != TRACE_MAGIC {
        return Err(TraceDecodeError::BadMagic(magic));
    }
    let mut buf = [0u8; HEADER_BYTES - 4];
    r.read_exact(&mut buf)
        .map_err(|_| TraceDecodeError::TruncatedStream("header"))?;
    let version = u16::from_le_bytes([buf[0], buf[1]]);
    if version != TRACE_VERSION {
        return Err(TraceDecodeError::BadVersion(version));
    }
    let channel_id = u16::from_le_bytes([buf[2], buf[3]]);
    let config = read_mem_config(&buf[4..20]);
    config.validate()?;
    let u64_at = |i: usize| u64::from_le_bytes(buf[i..i + 8].try_into().unwrap());
    Ok(TraceFileHeader {
        channel_id,
        config,
        epoch: u64_at(20),
        config_space_base: u64_at(28),
        config_space_size: u64_at(36),
    })
}

/// Streaming encoder; call [`write_ref`](Self::write_ref) with cycle-ordered
/// references.
pub struct TraceWriter<W: Write> {
    w: W,
    prev_cycle: u64,
    line_shift: u32,
    pub words_written: u64,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(mut w: W, header: &TraceFileHeader) -> Result<Self, TraceEncodeError> {
        write_header(&mut w, header)?;
        Ok(TraceWriter {
            w,
            prev_cycle: header.epoch,
            line_shift: header.config.cacheline_bytes.trailing_zeros(),
            words_written: 0,
        })
    }

    pub fn write_ref(&mut self, r: &PhysRef) -> Result<(), TraceEncodeError> {
        let index = r.addr >> self.line_shift;
        if index >> INDEX_BITS != 0 {
            return Err(TraceEncodeError::AddressOverflow { addr: r.addr });
        }
        if r.addr & ((1 << self.line_shift) - 1) != 0 {
            return Err(TraceEncodeError::MisalignedAddress { addr: r.addr });
        }
        let duration = r
            .cycle
            .checked_sub(self.prev_cycle)
            .ok_or(TraceEncodeError::NonMonotonicCycle {
                cycle: r.cycle,
                prev: self.prev_cycle,
            })?;
        if duration >= 16 {
            let high = duration >> 4;
            if high >> PAYLOAD_BITS != 0 {
                return Err(TraceEncodeError::DurationOverflow { duration });
            }
            let escape = KIND_BIT | (high as u32 & PAYLOAD_MASK);
            self.w.write_all(&escape.to_le_bytes())?;
            self.words_written += 1;
        }
        let mut word = ((index as u32) << 4) | (duration as u32 & 0xF);
        if r.rw == Rw::Write {
            word |= RW_BIT;
        }
        self.w.write_all(&word.to_le_bytes())?;
        self.words_written += 1;
        self.prev_cycle = r.cycle;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W, TraceEncodeError> {
        self.w.flush()?;
        Ok(self.w)
    }
}

/// Streaming decoder over the packed words following a header.
pub struct TraceReader<R: Read> {
    records: ReadRecords<R, 4>,
    header: TraceFileHeader,
    prev_cycle: u64,
    line_shift: u32,
    done: bool,
}

impl<R: Read> TraceReader<R> {
    pub fn new(mut r: R) -> Result<Self, TraceDecodeError> {
        let header = read_header(&mut r)?;
        Ok(TraceReader {
            records: ReadRecords::new(r),
            prev_cycle: header.epoch,
            line_shift: header.config.cacheline_bytes.trailing_zeros(),
            header,
            done: false,
        })
    }

    pub fn header(&self) -> &TraceFileHeader {
        &self.header
    }

    fn next_word(&mut self) -> Result<Option<u32>, TraceDecodeError> {
        match self.records.next_record() {
            Ok(Some(bytes)) => Ok(Some(u32::from_le_bytes(bytes))),
            Ok(None) => Ok(None),
            Err(crate::io::RecordReadError::Truncated) => {
                Err(TraceDecodeError::TruncatedStream("record"))
            }
            Err(crate::io::RecordReadError::Io(e)) => Err(e.into()),
        }
    }
}

impl<R: Read> Iterator for TraceReader<R> {
    type Item = Result<PhysRef, TraceDecodeError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let mut step = || -> Result<Option<PhysRef>, TraceDecodeError> {
            let mut high: u64 = 0;
            let word = match self.next_word()? {
                Some(w) => w,
                None => return Ok(None),
            };
            let word = if word & KIND_BIT != 0 {
                let subtype = ((word >> PAYLOAD_BITS) & 0x7) as u8;
                if subtype != 0 {
                    return Err(TraceDecodeError::ReservedEscapeSubtype(subtype));
                }
                high = (word & PAYLOAD_MASK) as u64;
                match self.next_word()? {
                    Some(w) if w & KIND_BIT == 0 => w,
                    _ => return Err(TraceDecodeError::DanglingEscape),
                }
            } else {
                word
            };
            let duration = (high << 4) | (word & 0xF) as u64;
            let cycle = self.prev_cycle + duration;
            self.prev_cycle = cycle;
            Ok(Some(PhysRef {
                addr: (((word >> 4) & INDEX_MASK) as u64) << self.line_shift,
                rw: if word & RW_BIT != 0 { Rw::Write } else { Rw::Read },
                cycle,
                channel: self.header.channel_id,
            }))
        };
        match step() {
            Ok(Some(r)) => Some(Ok(r)),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

/// Encode a full trace into a byte buffer.
pub fn encode_stream(refs: &[PhysRef], header: &TraceFileHeader) -> Result<Vec<u8>, TraceEncodeError> {
    let mut w = TraceWriter::new(Vec::new(), header)?;
    for r in refs {
        w.write_ref(r)?;
    }
    w.finish()
}

/// Decode a full trace from a byte buffer.
pub fn decode_stream(bytes: &[u8]) -> Result<(TraceFileHeader, Vec<PhysRef>), TraceDecodeError> {
    let mut reader = TraceReader::new(bytes)?;
    let header = *reader.header();
    let refs = reader.by_ref().collect::<Result<Vec<_>, _>>()?;
    Ok((header, refs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn header() -> TraceFileHeader {
        TraceFileHeader {
            channel_id: 3,
            config: MemConfig::ddr200(),
            epoch: 0,
            config_space_base: 0x7f80_0000,
            config_space_size: 0x80_0000,
        }
    }

    fn refs_at(cycles: &[u64]) -> Vec<PhysRef> {
        cycles
            .iter()
            .enumerate()
            .map(|(i, &cycle)| PhysRef {
                addr: (i as u64) * 64,
                rw: if i % 2 == 0 { Rw::Read } else { Rw::Write },
                cycle,
                channel: 3,
            })
            .collect()
    }

    #[test]
    fn short_gaps_pack_one_word_each() {
        let refs = refs_at(&[3, 8, 10]);
        let bytes = encode_stream(&refs, &header()).unwrap();
        assert_eq!(bytes.len(), HEADER_BYTES + 3 * 4);
        let (h, back) = decode_stream(&bytes).unwrap();
        assert_eq!(h, header());
        assert_eq!(back, refs);
    }

    #[test]
    fn duration_boundary_at_16_needs_an_escape() {
        // Gaps of 15 stay single-word; 16 and up split into high/low parts.
        for (gap, words) in [(15u64, 2usize), (16, 3), (17, 3)] {
            let refs = refs_at(&[0, gap]);
            let bytes = encode_stream(&refs, &header()).unwrap();
            assert_eq!(bytes.len(), HEADER_BYTES + words * 4, "gap {gap}");
            assert_eq!(decode_stream(&bytes).unwrap().1, refs);
        }
    }

    #[test]
    fn huge_gaps_round_trip_up_to_32_bits() {
        let refs = refs_at(&[5, 5 + (1 << 28), 5 + (1 << 28) + (u32::MAX as u64)]);
        let bytes = encode_stream(&refs, &header()).unwrap();
        assert_eq!(decode_stream(&bytes).unwrap().1, refs);
    }

    #[test]
    fn gap_of_2_pow_32_overflows() {
        let refs = refs_at(&[0, 1u64 << 32]);
        assert!(matches!(
            encode_stream(&refs, &header()),
            Err(TraceEncodeError::DurationOverflow { .. })
        ));
    }

    #[test]
    fn epoch_offsets_the_first_duration() {
        let h = TraceFileHeader { epoch: 100, ..header() };
        let refs = vec![PhysRef { addr: 0, rw: Rw::Read, cycle: 103, channel: 3 }];
        let bytes = encode_stream(&refs, &h).unwrap();
        // One word: duration 3 from the epoch.
        assert_eq!(bytes.len(), HEADER_BYTES + 4);
        assert_eq!(decode_stream(&bytes).unwrap().1, refs);
        // A first cycle before the epoch cannot be represented.
        let early = vec![PhysRef { addr: 0, rw: Rw::Read, cycle: 99, channel: 3 }];
        assert!(matches!(
            encode_stream(&early, &h),
            Err(TraceEncodeError::NonMonotonicCycle { .. })
        ));
    }

    #[test]
    fn address_limits() {
        let top = ((1u64 << INDEX_BITS) - 1) * 64;
        let ok = vec![PhysRef { addr: top, rw: Rw::Read, cycle: 0, channel: 3 }];
        assert_eq!(decode_stream(&encode_stream(&ok, &header()).unwrap()).unwrap().1, ok);
        let over = vec![PhysRef { addr: top + 64, rw: Rw::Read, cycle: 0, channel: 3 }];
        assert!(matches!(
            encode_stream(&over, &header()),
            Err(TraceEncodeError::AddressOverflow { .. })
        ));
        let unaligned = vec![PhysRef { addr: 72, rw: Rw::Read, cycle: 0, channel: 3 }];
        assert!(matches!(
            encode_stream(&unaligned, &header()),
            Err(TraceEncodeError::MisalignedAddress { .. })
        ));
    }

    #[test]
    fn cycle_regression_is_an_error() {
        let refs = vec![
            PhysRef { addr: 0, rw: Rw::Read, cycle: 10, channel: 3 },
            PhysRef { addr: 64, rw: Rw::Read, cycle: 9, channel: 3 },
        ];
        assert!(matches!(
            encode_stream(&refs, &header()),
            Err(TraceEncodeError::NonMonotonicCycle { .. })
        ));
    }

    #[test]
    fn truncated_and_corrupt_streams_are_rejected() {
        let refs = refs_at(&[0, 40]);
        let bytes = encode_stream(&refs, &header()).unwrap();
        // Cut mid-record.
        assert!(matches!(
            decode_stream(&bytes[..bytes.len() - 2]),
            Err(TraceDecodeError::TruncatedStream(_))
        ));
        // Cut after the escape: it dangles.
        assert!(matches!(
            decode_stream(&bytes[..bytes.len() - 4]),
            Err(TraceDecodeError::DanglingEscape)
        ));
        // Bad magic.
        let mut evil = bytes.clone();
        evil[0] = b'X';
        assert!(matches!(decode_stream(&evil), Err(TraceDecodeError::BadMagic(_))));
        // Escape directly followed by an escape.
        let mut two_escapes = bytes[..HEADER_BYTES].to_vec();
        two_escapes.extend((KIND_BIT | 1).to_le_bytes());
        two_escapes.extend((KIND_BIT | 1).to_le_bytes());
        assert!(matches!(
            decode_stream(&two_escapes),
            Err(TraceDecodeError::DanglingEscape)
        ));
        // Reserved subtype.
        let mut reserved = bytes[..HEADER_BYTES].to_vec();
        reserved.extend((KIND_BIT | (3 << PAYLOAD_BITS)).to_le_bytes());
        assert!(matches!(
            decode_stream(&reserved),
            Err(TraceDecodeError::ReservedEscapeSubtype(3))
        ));
    }

    #[test]
    fn config_space_size_must_be_line_aligned() {
        let h = TraceFileHeader { config_space_size: 100, ..header() };
        assert!(matches!(
            encode_stream(&[], &h),
            Err(TraceEncodeError::BadConfigSpace { .. })
        ));
    }

    proptest! {
        // Cycle gaps drawn to exercise both sides of every encoding boundary.
        #[test]
        fn packed_round_trip(
            gaps in prop::collection::vec(
                prop_oneof![0u64..16, 16u64..256, (1u64 << 28)..(1 << 29), (1u64 << 31)..(1 << 32)],
                0..200,
            ),
            lines in prop::collection::vec(0u64..(1 << INDEX_BITS), 200),
            writes in prop::collection::vec(any::<bool>(), 200),
            epoch in 0u64..1_000_000,
        ) {
            let h = TraceFileHeader { epoch, ..header() };
            let mut cycle = epoch;
            let refs: Vec<PhysRef> = gaps
                .iter()
                .zip(&lines)
                .zip(&writes)
                .map(|((&gap, &line), &w)| {
                    cycle += gap;
                    PhysRef {
                        addr: line * 64,
                        rw: if w { Rw::Write } else { Rw::Read },
                        cycle,
                        channel: 3,
                    }
                })
                .collect();
            let bytes = encode_stream(&refs, &h).unwrap();
            // Size bounds: at most 8 bytes per reference, exactly 4 when all
            // gaps are short.
            prop_assert!(bytes.len() <= HEADER_BYTES + refs.len() * 8);
            if gaps.iter().all(|&g| g < 16) {
                prop_assert_eq!(bytes.len(), HEADER_BYTES + refs.len() * 4);
            }
            let (hh, back) = decode_stream(&bytes).unwrap();
            prop_assert_eq!(hh, h);
            prop_assert_eq!(back, refs);
        }
    }
}
