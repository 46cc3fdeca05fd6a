//! Software pipeline of a bus-snooping memory tracer.
//!
//! The crate models the full path from raw DDR command capture to analysis:
//!
//! * [`ddr`] turns ACTIVATE/READ/WRITE/PRECHARGE streams into cacheline
//!   references via a per-bank state machine, and [`fifo`] checks whether a
//!   given buffer/uplink pair would have kept up with them.
//! * [`codec`] packs references into the 4-byte on-the-wire record format and
//!   reads them back; [`merge`] joins per-channel streams on one clock.
//! * [`events`] splits out references that hit the reserved configuration
//!   window and decodes them into session markers and user events.
//! * [`pagemap`] and [`dma`] rebuild virtual-address and DMA views from
//!   journals kept alongside the trace.
//! * [`analyze`] hosts the trace consumers: stream/stride detection,
//!   sequential-prefetcher emulation, process run lengths, reuse distance,
//!   hot pages, and per-interval statistics.
//! * [`workload`] generates synthetic command streams together with a ground
//!   truth ledger, and [`verify`] replays the pipeline against that ledger.
//!
//! Addresses are byte addresses of cacheline-aligned accesses throughout;
//! cycles are absolute counts of memory-clock cycles shared by all channels.

pub mod analyze;
pub mod bandwidth;
pub mod codec;
pub mod config;
pub mod ddr;
pub mod dma;
pub mod events;
pub mod fifo;
pub mod io;
pub mod merge;
pub mod pagemap;
pub mod verify;
pub mod workload;

pub use config::{AddressMapping, MemConfig};
pub use ddr::{DdrCommand, PhysRef, Rw};
