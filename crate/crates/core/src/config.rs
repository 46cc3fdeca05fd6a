//! Memory-system geometry and the physical address layout.
//!
//! [`MemConfig`] carries the handful of DDR parameters the pipeline needs;
//! [`AddressMapping`] fixes how `{row, bank, col}` compose into a physical
//! byte address. The mapping is a runtime configuration value, not a
//! constant: controllers differ, so decode and generation both take it as a
//! parameter.
//!
//! The canonical layout is `row ∥ bank ∥ col` (row most significant) with
//! `log2(cacheline_bytes)` zero bits below the column field. The column field
//! is cacheline-granular: one column command moves one full cacheline, so
//! consecutive `col` values name consecutive cachelines within an open row
//! and burst-beat addresses never appear.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("{field} must be {requirement}, got {got}")]
    BadField {
        field: &'static str,
        requirement: &'static str,
        got: u64,
    },
    #[error("{field} out of range: {value} does not fit in {bits} bits")]
    OutOfRangeField {
        field: &'static str,
        value: u64,
        bits: u32,
    },
    #[error("mapping order must name row, bank and col exactly once")]
    BadFieldOrder,
}

/// DDR channel geometry and timing, as far as this pipeline cares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemConfig {
    /// Memory clock in MHz (command rate, not data rate).
    pub freq_mhz: u32,
    pub bus_width_bits: u16,
    pub cacheline_bytes: u32,
    /// Beats per column command.
    pub burst_length: u8,
    /// Minimum column-to-column spacing in cycles.
    pub tccd: u8,
    pub bank_count: u16,
    pub row_bits: u8,
    /// Width of the cacheline-granular column field.
    pub col_bits: u8,
}

impl MemConfig {
    /// DDR at 200 MHz on a 64-bit bus: 4 banks, 2 GiB span.
    pub fn ddr200() -> Self {
        MemConfig {
            freq_mhz: 200,
            bus_width_bits: 64,
            cacheline_bytes: 64,
            burst_length: 8,
            tccd: 2,
            bank_count: 4,
            row_bits: 13,
            col_bits: 10,
        }
    }

    /// DDR2 at 400 MHz on a 128-bit (dual-channel) bus: 8 banks, 4 GiB span.
    pub fn ddr2_400() -> Self {
        MemConfig {
            freq_mhz: 400,
            bus_width_bits: 128,
            cacheline_bytes: 64,
            burst_length: 4,
            tccd: 2,
            bank_count: 8,
            row_bits: 13,
            col_bits: 10,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        fn check(cond: bool, field: &'static str, requirement: &'static str, got: u64) -> Result<(), ConfigError> {
            if cond {
                Ok(())
            } else {
                Err(ConfigError::BadField { field, requirement, got })
            }
        }
        check(self.freq_mhz > 0, "freq_mhz", "positive", self.freq_mhz as u64)?;
        check(
            matches!(self.bus_width_bits, 64 | 128),
            "bus_width_bits",
            "64 or 128",
            self.bus_width_bits as u64,
        )?;
        check(
            self.cacheline_bytes >= 64 && self.cacheline_bytes.is_power_of_two(),
            "cacheline_bytes",
            "a power of two >= 64",
            self.cacheline_bytes as u64,
        )?;
        check(
            matches!(self.burst_length, 4 | 8),
            "burst_length",
            "4 or 8",
            self.burst_length as u64,
        )?;
        check(self.tccd >= 1, "tccd", "at least 1", self.tccd as u64)?;
        check(self.bank_count >= 1, "bank_count", "at least 1", self.bank_count as u64)?;
        check(
            (1..=32).contains(&self.row_bits),
            "row_bits",
            "in 1..=32",
            self.row_bits as u64,
        )?;
        check(
            (1..=26).contains(&self.col_bits),
            "col_bits",
            "in 1..=26",
            self.col_bits as u64,
        )?;
        Ok(())
    }

    pub fn freq_hz(&self) -> u64 {
        self.freq_mhz as u64 * 1_000_000
    }
}

/// One of the three address fields a mapping arranges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AddrField {
    Row,
    Bank,
    Col,
}

/// Bit layout composing `{row, bank, col}` into a physical byte address.
///
/// Fields are packed most-significant-first in `order`, with
/// `log2(cacheline_bytes)` zero bits below them, so every composed address is
/// cacheline-aligned and `compose`/`decompose` are inverse over in-range
/// field values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AddressMapping {
    order: [AddrField; 3],
    row_bits: u32,
    bank_bits: u32,
    col_bits: u32,
    line_shift: u32,
}

impl AddressMapping {
    /// The canonical `row ∥ bank ∥ col` layout for `cfg`.
    ///
    /// Requires a power-of-two `bank_count` so the bank field is a whole
    /// number of bits.
    pub fn canonical(cfg: &MemConfig) -> Result<Self, ConfigError> {
        Self::with_order(cfg, [AddrField::Row, AddrField::Bank, AddrField::Col])
    }

    pub fn with_order(cfg: &MemConfig, order: [AddrField; 3]) -> Result<Self, ConfigError> {
        cfg.validate()?;
        if !cfg.bank_count.is_power_of_two() {
            return Err(ConfigError::BadField {
                field: "bank_count",
                requirement: "a power of two for bit-field mapping",
                got: cfg.bank_count as u64,
            });
        }
        let mut seen = [false; 3];
        for f in order {
            seen[f as usize] = true;
        }
        if seen != [true; 3] {
            return Err(ConfigError::BadFieldOrder);
        }
        Ok(AddressMapping {
            order,
            row_bits: cfg.row_bits as u32,
            bank_bits: cfg.bank_count.trailing_zeros(),
            col_bits: cfg.col_bits as u32,
            line_shift: cfg.cacheline_bytes.trailing_zeros(),
        })
    }

    /// Parse an order string like `"row:bank:col"` (most significant first).
    pub fn parse_order(s: &str) -> Result<[AddrField; 3], ConfigError> {
        let mut fields = [AddrField::Row; 3];
        let mut n = 0;
        for part in s.split(':') {
            if n == 3 {
                return Err(ConfigError::BadFieldOrder);
            }
            fields[n] = match part.trim() {
                "row" => AddrField::Row,
                "bank" => AddrField::Bank,
                "col" => AddrField::Col,
                _ => return Err(ConfigError::BadFieldOrder),
            };
            n += 1;
        }
        if n != 3 {
            return Err(ConfigError::BadFieldOrder);
        }
        // Each field exactly once; a repeat means one is missing.
        if fields[0] == fields[1] || fields[0] == fields[2] || fields[1] == fields[2] {
            return Err(ConfigError::BadFieldOrder);
        }
        Ok(fields)
    }

    fn field_bits(&self, f: AddrField) -> u32 {
        match f {
            AddrField::Row => self.row_bits,
            AddrField::Bank => self.bank_bits,
            AddrField::Col => self.col_bits,
        }
    }

    /// Total width of composed addresses, line-offset bits included.
    pub fn total_bits(&self) -> u32 {
        self.row_bits + self.bank_bits + self.col_bits + self.line_shift
    }

    /// One past the highest composable address.
    pub fn span_bytes(&self) -> u64 {
        1u64 << self.total_bits()
    }

    pub fn cacheline_bytes(&self) -> u64 {
        1u64 << self.line_shift
    }

    pub fn compose(&self, row: u32, bank: u16, col: u32) -> Result<u64, ConfigError> {
        let val = |f: AddrField| match f {
            AddrField::Row => ("row", row as u64),
            AddrField::Bank => ("bank", bank as u64),
            AddrField::Col => ("col", col as u64),
        };
        let mut acc = 0u64;
        for f in self.order {
            let bits = self.field_bits(f);
            let (name, v) = val(f);
            if bits < 64 && v >> bits != 0 {
                return Err(ConfigError::OutOfRangeField {
                    field: name,
                    value: v,
                    bits,
                });
            }
            acc = (acc << bits) | v;
        }
        Ok(acc << self.line_shift)
    }

    /// Inverse of [`compose`](Self::compose). Bits below the cacheline and
    /// above `total_bits` are ignored.
    pub fn decompose(&self, addr: u64) -> (u32, u16, u32) {
        let mut rest = addr >> self.line_shift;
        let (mut row, mut bank, mut col) = (0u32, 0u16, 0u32);
        for f in self.order.iter().rev() {
            let bits = self.field_bits(*f);
            let mask = if bits == 64 { u64::MAX } else { (1u64 << bits) - 1 };
            let v = rest & mask;
            rest >>= bits;
            match f {
                AddrField::Row => row = v as u32,
                AddrField::Bank => bank = v as u16,
                AddrField::Col => col = v as u32,
            }
        }
        (row, bank, col)
    }
}
