//! Worst-case trace bandwidth model.
//!
//! A tracer that emits one fixed-width record per column command has a hard
//! output ceiling set by the bus itself: column commands cannot arrive faster
//! than one per `max(2·tCCD, BL)` cycles, and each one moves
//! `BL · bus_width / cacheline` of a cacheline, i.e. produces that many trace
//! records per command. The uplink therefore never needs more than
//!
//! ```text
//! rate = freq / max(2·tCCD, BL) · (BL · bus_width_bits / cacheline_bits) · record_bits
//! ```
//!
//! bits per second. When `BL >= 2·tCCD` the burst length cancels and this
//! collapses to `freq · bus_width_bits · record_bits / cacheline_bits`.
//!
//! The record width here is a model parameter, not the storage format: sizing
//! a link for a 40-bit raw capture path and packing 32-bit records on disk are
//! independent choices.

use crate::config::MemConfig;

/// Peak column-command rate in commands per second: `freq / max(2·tCCD, BL)`.
pub fn command_rate(cfg: &MemConfig) -> f64 {
    let spacing = (2 * cfg.tccd as u64).max(cfg.burst_length as u64);
    cfg.freq_hz() as f64 / spacing as f64
}

/// Trace records produced per column command.
pub fn records_per_command(cfg: &MemConfig) -> f64 {
    (cfg.burst_length as u64 * cfg.bus_width_bits as u64) as f64
        / (cfg.cacheline_bytes as u64 * 8) as f64
}

/// Peak trace bandwidth in bits per second for `record_bits`-wide records.
///
/// All intermediate values stay well inside the exactly-representable integer
/// range of `f64`, so configurations where the arithmetic divides evenly
/// (e.g. 400 MHz, 128-bit bus, 64-byte lines, 40-bit records = 4 Gb/s) come
/// out exact.
pub fn peak_trace_bandwidth(cfg: &MemConfig, record_bits: u32) -> f64 {
    command_rate(cfg) * records_per_command(cfg) * record_bits as f64
}

/// Render a bit rate the way datasheets do: `4 Gb/s`, `800 Mb/s`, `1.25 Gb/s`.
pub fn format_bit_rate(bits_per_sec: f64) -> String {
    let units = [(1e9, "Gb/s"), (1e6, "Mb/s"), (1e3, "kb/s")];
    for (scale, unit) in units {
        if bits_per_sec >= scale {
            let v = bits_per_sec / scale;
            return if v == v.trunc() {
                format!("{} {}", v as u64, unit)
            } else {
                format!("{:.3} {}", v, unit)
            };
        }
    }
    format!("{} b/s", bits_per_sec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dual_channel_400mhz_40bit_records_is_4gbps() {
        let cfg = MemConfig::ddr2_400();
        assert_eq!(peak_trace_bandwidth(&cfg, 40), 4e9);
        assert_eq!(format_bit_rate(4e9), "4 Gb/s");
    }

    #[test]
    fn ddr200_32bit_records_is_800mbps() {
        let cfg = MemConfig::ddr200();
        assert_eq!(peak_trace_bandwidth(&cfg, 32), 800e6);
        assert_eq!(format_bit_rate(800e6), "800 Mb/s");
    }

    #[test]
    fn command_rate_is_capped_by_tccd_and_burst() {
        // BL = 2·tCCD = 4: one command every 4 cycles of a 400 MHz clock.
        assert_eq!(command_rate(&MemConfig::ddr2_400()), 100e6);
        // Slow column timing leaves tCCD as the limit.
        let cfg = MemConfig {
            burst_length: 4,
            tccd: 4,
            ..MemConfig::ddr2_400()
        };
        assert_eq!(command_rate(&cfg), 50e6);
    }

    #[test]
    fn short_bursts_do_not_reach_the_reduced_form() {
        // BL < 2·tCCD: the bus idles between bursts, so the peak is below
        // freq·width·bits/line.
        let cfg = MemConfig {
            burst_length: 4,
            tccd: 4,
            ..MemConfig::ddr2_400()
        };
        let reduced = 400e6 * 128.0 * 32.0 / 512.0;
        assert!(peak_trace_bandwidth(&cfg, 32) < reduced);
        assert_eq!(peak_trace_bandwidth(&cfg, 32), reduced / 2.0);
    }

    #[test]
    fn bandwidth_is_linear_in_record_width() {
        let cfg = MemConfig::ddr2_400();
        assert_eq!(
            peak_trace_bandwidth(&cfg, 64),
            2.0 * peak_trace_bandwidth(&cfg, 32)
        );
    }

    #[test]
    fn rate_formatting_handles_fractions() {
        assert_eq!(format_bit_rate(1.25e9), "1.250 Gb/s");
        assert_eq!(format_bit_rate(500.0), "500 b/s");
    }
}
