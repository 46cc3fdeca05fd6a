//! `dimmtrace`: the capture-to-analysis pipeline as shell subcommands.
//!
//! Each subcommand wraps one library stage, so a shell pipeline
//! (`gen` → `decode` → `encode` → `merge` → `overlay` → `translate` /
//! `classify-dma` → `analyze …`) produces the same bytes as composing the
//! library in process. Outputs are written atomically (temp file + rename
//! in the target directory) and every command drops a `*.manifest.json`
//! with input digests beside its primary output, so a run can be audited
//! and replayed.
//!
//! Exit codes: 0 success, 1 usage error, 2 bad data, 3 conformance failure.

mod artifacts;
mod run;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "dimmtrace", version, about = "Memory-trace pipeline tools")]
pub struct Cli {
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Subcommand)]
pub enum Cmd {
    /// Generate a scenario: command captures, journals, ledger
    Gen(GenArgs),
    /// Decode a .hmtc command capture into references
    Decode(DecodeArgs),
    /// Pack references into a .hmtt trace
    Encode(EncodeArgs),
    /// Unpack a .hmtt trace into references
    DecodeTrace(DecodeTraceArgs),
    /// Merge per-channel .hmtt traces into one cycle-ordered trace
    Merge(MergeArgs),
    /// Split a trace into plain traffic and decoded events
    Overlay(OverlayArgs),
    /// Attach pid and virtual address from a page journal
    Translate(TranslateArgs),
    /// Label references as CPU or device traffic from a DMA journal
    ClassifyDma(ClassifyDmaArgs),
    /// Run one analyzer over a reference file
    #[command(subcommand)]
    Analyze(AnalyzeKind),
    /// Replay a scenario through the pipeline and check it against its ledger
    Verify(VerifyArgs),
}

fn parse_u64_flex(s: &str) -> Result<u64, String> {
    let (body, radix) = match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => (hex, 16),
        None => (s, 10),
    };
    u64::from_str_radix(&body.replace('_', ""), radix).map_err(|e| e.to_string())
}

#[derive(Args)]
pub struct GenArgs {
    /// Scenario description (JSON)
    pub spec: PathBuf,
    /// Directory for the generated artifacts
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Args)]
pub struct DecodeArgs {
    /// .hmtc command capture
    pub input: PathBuf,
    /// Output reference file
    #[arg(long)]
    pub out: PathBuf,
    /// Channel id stamped on every decoded reference
    #[arg(long, default_value_t = 0)]
    pub channel: u16,
    /// Address field order, most significant first
    #[arg(long, default_value = "row:bank:col")]
    pub order: String,
}

#[derive(Args)]
pub struct EncodeArgs {
    /// Input reference file
    pub input: PathBuf,
    /// Output .hmtt trace
    #[arg(long)]
    pub out: PathBuf,
    /// Cycle the first record's duration is measured from
    #[arg(long, default_value_t = 0)]
    pub epoch: u64,
    /// Header channel id; defaults to the input's uniform channel
    #[arg(long)]
    pub channel_id: Option<u16>,
    /// Config-space window start, for the overlay stage
    #[arg(long, default_value = "0", value_parser = parse_u64_flex)]
    pub config_space_base: u64,
    /// Config-space window size; 0 means no window
    #[arg(long, default_value = "0", value_parser = parse_u64_flex)]
    pub config_space_size: u64,
}

#[derive(Args)]
pub struct DecodeTraceArgs {
    /// Input .hmtt trace
    pub input: PathBuf,
    /// Output reference file
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct MergeArgs {
    /// Input .hmtt traces, one per channel
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Output .hmtt trace
    #[arg(long)]
    pub out: PathBuf,
    /// Header channel id for the merged stream (packed records carry none)
    #[arg(long, default_value_t = 0)]
    pub channel_id: u16,
}

#[derive(Args)]
pub struct OverlayArgs {
    /// Input .hmtt trace; its header locates the config-space window
    pub input: PathBuf,
    /// Plain-traffic output (reference file)
    #[arg(long)]
    pub normal_out: PathBuf,
    /// Decoded events output (JSONL)
    #[arg(long)]
    pub events_out: PathBuf,
    /// Event dictionary JSON; the built-in canonical one if omitted
    #[arg(long)]
    pub dict: Option<PathBuf>,
}

#[derive(Args)]
pub struct TranslateArgs {
    /// Input reference file
    pub input: PathBuf,
    /// Page journal (JSONL)
    #[arg(long)]
    pub pagemap: PathBuf,
    /// Output reference file with pid and virtual address attached;
    /// unmatched references are dropped and counted
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 4096)]
    pub page_bytes: u64,
}

#[derive(Args)]
pub struct ClassifyDmaArgs {
    /// Input reference file (cycle-ordered)
    pub input: PathBuf,
    /// DMA journal (JSONL)
    #[arg(long)]
    pub dma: PathBuf,
    /// Session events (JSONL, from overlay); without it the whole trace is
    /// one window
    #[arg(long)]
    pub events: Option<PathBuf>,
    /// Output reference file with labels attached
    #[arg(long)]
    pub out: PathBuf,
    /// Write the traffic summary JSON here as well as stdout
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Args)]
pub struct VerifyArgs {
    /// Scenario directory (holding scenario.json) or the spec file itself
    pub scenario: PathBuf,
    /// Also write the report text here
    #[arg(long)]
    pub report: Option<PathBuf>,
}

/// Input / output shared by the trace-consuming analyzers.
#[derive(Args)]
pub struct AnalyzeIo {
    /// Input reference file
    pub input: PathBuf,
    /// Write the summary JSON here (always printed to stdout)
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Write the detail table here (CSV)
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Subcommand)]
pub enum AnalyzeKind {
    /// Stream-covered ratio and detected strided streams
    Scr {
        #[command(flatten)]
        io: AnalyzeIo,
        /// Accesses a stream may lag behind before it stops matching
        #[arg(long, default_value_t = 32)]
        window: usize,
        /// Members needed before a candidate counts as a stream
        #[arg(long, default_value_t = 3)]
        min_len: u32,
        /// One detector per pid (input must carry pids)
        #[arg(long)]
        by_pid: bool,
    },
    /// Next-line prefetcher coverage
    Prefetch {
        #[command(flatten)]
        io: AnalyzeIo,
        /// Consecutive lines before prefetching kicks in
        #[arg(long, default_value_t = 3)]
        trigger: u32,
    },
    /// Same-pid run lengths (input must carry pids)
    Runlen {
        #[command(flatten)]
        io: AnalyzeIo,
    },
    /// Page reuse distance against a depth-capped LRU stack
    Reuse {
        #[command(flatten)]
        io: AnalyzeIo,
        #[arg(long, default_value_t = 128)]
        depth: usize,
        #[arg(long, default_value_t = 4096)]
        page_bytes: u64,
        /// Cacheline granularity instead of pages
        #[arg(long)]
        lines: bool,
    },
    /// Hottest pages by access count
    Hot {
        #[command(flatten)]
        io: AnalyzeIo,
        #[arg(long, default_value_t = 4096)]
        page_bytes: u64,
        /// Pages to list in the summary
        #[arg(long, default_value_t = 10)]
        top: usize,
    },
    /// Per-window reference counts, bank spread and address-bit toggles
    Intervals {
        #[command(flatten)]
        io: AnalyzeIo,
        #[arg(long, default_value_t = 100_000)]
        interval_cycles: u64,
        /// Address field order, most significant first
        #[arg(long, default_value = "row:bank:col")]
        order: String,
    },
    /// Stream-count distribution over strides
    StrideCdf {
        #[command(flatten)]
        io: AnalyzeIo,
        #[arg(long, default_value_t = 32)]
        window: usize,
        #[arg(long, default_value_t = 3)]
        min_len: u32,
    },
    /// Peak trace bandwidth for a capture geometry (takes no input file)
    Bwmodel {
        /// Memory clock in MHz
        #[arg(long)]
        freq: u32,
        /// Bus width in bits
        #[arg(long)]
        bus: u16,
        /// Cacheline size in bytes
        #[arg(long)]
        line: u32,
        /// Trace record width in bits
        #[arg(long)]
        bitwidth: u32,
        /// Burst length in beats
        #[arg(long, default_value_t = 4)]
        bl: u8,
        /// Minimum column-to-column spacing in cycles
        #[arg(long, default_value_t = 2)]
        tccd: u8,
        /// Write the model JSON here
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help/--version are successes; everything else is a usage error.
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run::run(cli.cmd) {
        Ok(code) => ExitCode::from(code),
        Err(run::CmdError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(run::CmdError::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
