//! Conformance: replay a generated scenario through the real pipeline and
//! diff every stage against the ground-truth ledger.
//!
//! Each stage reports pass/fail with a one-line detail; the report renders
//! deterministically (no timestamps, no pointers) so two runs over the same
//! scenario are byte-identical.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::analyze::streams::{detect_streams, StreamConfig};
use crate::analyze::{line_indices, runlen::run_lengths};
use crate::codec::{decode_stream, encode_stream, TraceFileHeader};
use crate::config::AddressMapping;
use crate::ddr::{decode_command_stream, PhysRef};
use crate::dma::classify_dma;
use crate::events::{overlay, ConfigSpace, EventDictionary};
use crate::merge::merge_channels;
use crate::pagemap::{build_mapping_index, translate};
use crate::workload::{generate, GeneratedScenario, ScenarioSpec, SpecError, PAGE_BYTES};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageResult {
    pub stage: &'static str,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConformanceReport {
    pub scenario: String,
    pub stages: Vec<StageResult>,
}

impl ConformanceReport {
    pub fn pass(&self) -> bool {
        self.stages.iter().all(|s| s.pass)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let verdict = if self.pass() { "PASS" } else { "FAIL" };
        let passed = self.stages.iter().filter(|s| s.pass).count();
        let _ = writeln!(
            out,
            "scenario {}: {verdict} ({passed}/{} stages)",
            self.scenario,
            self.stages.len()
        );
        for s in &self.stages {
            let mark = if s.pass { "PASS" } else { "FAIL" };
            let _ = writeln!(out, "  [{mark}] {}: {}", s.stage, s.detail);
        }
        out
    }
}

/// Generate the scenario and check the whole pipeline against its ledger.
pub fn verify_scenario(spec: &ScenarioSpec) -> Result<ConformanceReport, SpecError> {
    let g = generate(spec)?;
    Ok(verify_generated(&g))
}

pub fn verify_generated(g: &GeneratedScenario) -> ConformanceReport {
    let ledger = &g.ledger;
    let cfg = &ledger.config;
    let mut stages = Vec::new();

    let mapping = AddressMapping::canonical(cfg).expect("ledger carries a valid config");
    let cs = ConfigSpace::new(
        ledger.config_space.base,
        ledger.config_space.size,
        cfg.cacheline_bytes,
    )
    .expect("ledger carries a valid config space");
    let dict = EventDictionary::canonical();

    // Stage 1: per-channel decode, then the k-way merge, against the exact
    // interleaving the ledger promises.
    let mut per_channel: Vec<Vec<PhysRef>> = Vec::new();
    let mut decode_warnings = 0u64;
    for (ch, cmds) in g.commands.iter().enumerate() {
        let (refs, stats) =
            decode_command_stream(cmds.iter().copied(), &mapping, cfg.bank_count, ch as u16);
        decode_warnings += stats.total_warnings();
        per_channel.push(refs);
    }
    let expected_stream = expected_phys_stream(g, &cs);
    let merged = match merge_channels(per_channel.clone()) {
        Ok(m) => m,
        Err(e) => {
            stages.push(StageResult {
                stage: "decode",
                pass: false,
                detail: format!("merge failed: {e}"),
            });
            return ConformanceReport { scenario: ledger.name.clone(), stages };
        }
    };
    let decode_ok = decode_warnings == 0 && merged == expected_stream;
    stages.push(StageResult {
        stage: "decode",
        pass: decode_ok,
        detail: if decode_ok {
            format!(
                "{} refs + {} events over {} channel(s), 0 warnings",
                ledger.refs.len(),
                ledger.events.len(),
                g.commands.len()
            )
        } else {
            decode_mismatch_detail(&merged, &expected_stream, decode_warnings)
        },
    });

    // Stage 2: the packed-record codec round-trips every channel.
    let mut codec_ok = true;
    let mut codec_detail = String::new();
    let mut codec_bytes = 0usize;
    for (ch, refs) in per_channel.iter().enumerate() {
        let header = TraceFileHeader {
            channel_id: ch as u16,
            config: *cfg,
            epoch: 0,
            config_space_base: ledger.config_space.base,
            config_space_size: ledger.config_space.size,
        };
        let round = encode_stream(refs, &header)
            .map_err(|e| e.to_string())
            .and_then(|bytes| {
                codec_bytes += bytes.len();
                decode_stream(&bytes).map_err(|e| e.to_string())
            });
        match round {
            Ok(back) if back == (header, refs.clone()) => {}
            Ok(_) => {
                codec_ok = false;
                codec_detail = format!("channel {ch} did not round-trip");
                break;
            }
            Err(e) => {
                codec_ok = false;
                codec_detail = format!("channel {ch}: {e}");
                break;
            }
        }
    }
    if codec_ok {
        codec_detail = format!(
            "{} refs -> {} bytes -> identical refs",
            expected_stream.len(),
            codec_bytes
        );
    }
    stages.push(StageResult { stage: "codec", pass: codec_ok, detail: codec_detail });

    // Stage 3: event overlay splits the merged trace exactly as promised.
    let ov = overlay(merged.iter().copied(), &cs, &dict);
    let expected_normal: Vec<PhysRef> = ledger
        .refs
        .iter()
        .map(|r| PhysRef { addr: r.addr, rw: r.rw(), cycle: r.cycle, channel: r.channel })
        .collect();
    let overlay_ok =
        ov.normal == expected_normal && ov.events == ledger.events && ov.warnings.is_empty();
    stages.push(StageResult {
        stage: "overlay",
        pass: overlay_ok,
        detail: if overlay_ok {
            format!("{} normal refs, {} events, 0 warnings", ov.normal.len(), ov.events.len())
        } else {
            format!(
                "normal {}/{} events {}/{} warnings {}",
                ov.normal.len(),
                expected_normal.len(),
                ov.events.len(),
                ledger.events.len(),
                ov.warnings.len()
            )
        },
    });

    // Stage 4: page-table walk per reference.
    let (index, map_warnings) = build_mapping_index(&ledger.page_journal, &ledger.unmaps);
    let (virts, tstats) = translate(&ov.normal, &index, PAGE_BYTES);
    let expected_virts: Vec<(u32, u64, u64, crate::ddr::Rw)> = ledger
        .refs
        .iter()
        .filter_map(|r| Some((r.pid?, r.virt?, r.cycle, r.rw())))
        .collect();
    let got_virts: Vec<(u32, u64, u64, crate::ddr::Rw)> =
        virts.iter().map(|v| (v.pid, v.virt_addr, v.cycle, v.rw)).collect();
    let translate_ok = map_warnings.is_empty()
        && got_virts == expected_virts
        && tstats.translated == ledger.expect.translated
        && tstats.misses == ledger.expect.translation_misses
        && tstats.total == ov.normal.len() as u64;
    stages.push(StageResult {
        stage: "translate",
        pass: translate_ok,
        detail: if translate_ok {
            format!(
                "{} translated, {} misses ({:.2}%)",
                tstats.translated,
                tstats.misses,
                tstats.miss_rate_pct()
            )
        } else {
            format!(
                "translated {}/{} misses {}/{} journal warnings {}",
                tstats.translated,
                ledger.expect.translated,
                tstats.misses,
                ledger.expect.translation_misses,
                map_warnings.len()
            )
        },
    });

    // Stage 5: DMA classification, labels and attribution per reference.
    let (labeled, summary) = classify_dma(&ov.normal, &ledger.dma_journal, &ov.events, cfg.cacheline_bytes);
    let expected_labels: Vec<(u64, crate::dma::RefLabel, Option<u32>)> = ledger
        .refs
        .iter()
        .filter(|r| r.in_window)
        .map(|r| (r.cycle, r.label, r.dma_id))
        .collect();
    let got_labels: Vec<(u64, crate::dma::RefLabel, Option<u32>)> =
        labeled.iter().map(|l| (l.phys.cycle, l.label, l.dma_id)).collect();
    let expected_cdf = cdf_of(&ledger.expect.dma_request_sizes);
    let classify_ok = got_labels == expected_labels
        && summary.out_of_window == ledger.expect.out_of_window
        && summary.label_counts == ledger.expect.label_counts
        && summary.per_request_bytes == ledger.expect.per_request_bytes
        && summary.size_cdf == expected_cdf
        && summary.warnings.is_empty();
    stages.push(StageResult {
        stage: "classify",
        pass: classify_ok,
        detail: if classify_ok {
            format!(
                "{} labeled ({} out of window), {} requests",
                summary.labeled_total,
                summary.out_of_window,
                ledger.dma_journal.len()
            )
        } else {
            format!(
                "labels {}/{} out_of_window {}/{} warnings {}",
                got_labels.len(),
                expected_labels.len(),
                summary.out_of_window,
                ledger.expect.out_of_window,
                summary.warnings.len()
            )
        },
    });

    // Stage 6: analyzer outputs the ledger pins exactly.
    let mut analyzer_ok = true;
    let mut parts: Vec<String> = Vec::new();
    if let Some(expected_max) = ledger.expect.max_pid_run {
        let stats = run_lengths(virts.iter().map(|v| v.pid));
        if stats.max_run == expected_max {
            parts.push(format!("max pid run {}", stats.max_run));
        } else {
            analyzer_ok = false;
            parts.push(format!("max pid run {} != {}", stats.max_run, expected_max));
        }
    }
    if let Some(expected_strides) = &ledger.expect.expected_strides {
        let stats = detect_streams(line_indices(&ov.normal, cfg.cacheline_bytes), StreamConfig::default());
        let got: BTreeSet<i64> = stats.streams.iter().map(|s| s.stride).collect();
        let scr = stats.scr_pct();
        if got == *expected_strides && scr == 100.0 {
            parts.push(format!("strides {:?} at {scr:.1}% stream coverage", got));
        } else {
            analyzer_ok = false;
            parts.push(format!("strides {got:?} != {expected_strides:?} or coverage {scr:.1}% != 100.0%"));
        }
    }
    if parts.is_empty() {
        parts.push("no analyzer pins for this scenario".into());
    }
    stages.push(StageResult { stage: "analyzers", pass: analyzer_ok, detail: parts.join("; ") });

    ConformanceReport { scenario: ledger.name.clone(), stages }
}

/// The full PhysRef sequence decode+merge must produce: ledger refs and
/// events interleaved by cycle.
fn expected_phys_stream(g: &GeneratedScenario, cs: &ConfigSpace) -> Vec<PhysRef> {
    let mut out: Vec<PhysRef> = g
        .ledger
        .refs
        .iter()
        .map(|r| PhysRef { addr: r.addr, rw: r.rw(), cycle: r.cycle, channel: r.channel })
        .chain(g.ledger.events.iter().map(|e| PhysRef {
            addr: cs.slot_addr(e.kind.slot()),
            rw: crate::ddr::Rw::Read,
            cycle: e.cycle,
            channel: e.channel,
        }))
        .collect();
    out.sort_by_key(|r| r.cycle);
    out
}

fn decode_mismatch_detail(got: &[PhysRef], want: &[PhysRef], warnings: u64) -> String {
    if warnings > 0 {
        return format!("{warnings} decode warning(s)");
    }
    if got.len() != want.len() {
        return format!("{} refs decoded, ledger expects {}", got.len(), want.len());
    }
    match got.iter().zip(want).position(|(g, w)| g != w) {
        Some(i) => format!(
            "first divergence at index {i}: got {:?}, want {:?}",
            got[i], want[i]
        ),
        None => "streams equal but compared unequal".into(),
    }
}

fn cdf_of(sizes: &BTreeMap<u64, u64>) -> Vec<(u64, f64)> {
    let total: u64 = sizes.values().sum();
    if total == 0 {
        return Vec::new();
    }
    let mut cum = 0u64;
    sizes
        .iter()
        .map(|(&size, &n)| {
            cum += n;
            (size, cum as f64 / total as f64)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::MemConfig;
    use crate::dma::{DmaDir, DmaOwner};
    use crate::workload::{ActorSpec, ConfigSpaceSpec};

    fn full_spec() -> ScenarioSpec {
        ScenarioSpec {
            name: "verify_unit".into(),
            seed: 3,
            config: MemConfig::ddr2_400(),
            config_space: ConfigSpaceSpec { base: 0x1000_0000, size: 0x80_0000 },
            quantum: 16,
            cycle_step: 4,
            start_cycle: 1000,
            channels: 2,
            actors: vec![
                ActorSpec::Sequential {
                    start: 0,
                    count: 400,
                    stride: 64,
                    write_every: 5,
                    channel: 0,
                },
                ActorSpec::Process {
                    pid: 4,
                    virt_start: 0x80_0000,
                    pattern: crate::workload::AccessPattern::Walk { count: 300, stride: 64 },
                    map: crate::workload::MapLayout::Shuffled,
                    phys_page_start: 0x4000,
                    unmapped_every: 50,
                    write_every: 0,
                    channel: 1,
                },
                ActorSpec::Dma {
                    owner: DmaOwner::Nic,
                    dir: DmaDir::Write,
                    buf_start: 0x30_0000,
                    buf_size: 0x2000,
                    begin_cycle: 0,
                    repeat: 3,
                    channel: 0,
                },
                ActorSpec::Event { offset: 0x80, at_cycle: 2000, channel: 0 },
            ],
        }
    }

    #[test]
    fn clean_scenario_passes_every_stage() {
        let report = verify_scenario(&full_spec()).unwrap();
        assert!(report.pass(), "{}", report.render());
        assert_eq!(report.stages.len(), 6);
    }

    #[test]
    fn report_is_deterministic() {
        let a = verify_scenario(&full_spec()).unwrap();
        let b = verify_scenario(&full_spec()).unwrap();
        assert_eq!(a.render(), b.render());
    }

    #[test]
    fn tampered_commands_fail_decode_and_say_where() {
        let spec = full_spec();
        let mut g = generate(&spec).unwrap();
        // Swap one read for a write: same cycle, wrong direction.
        let cmd = g.commands[0]
            .iter_mut()
            .find(|c| c.kind == crate::ddr::CommandKind::Read)
            .unwrap();
        cmd.kind = crate::ddr::CommandKind::Write;
        let report = verify_generated(&g);
        assert!(!report.pass());
        let decode = &report.stages[0];
        assert!(!decode.pass);
        assert!(decode.detail.contains("divergence"), "{}", decode.detail);
    }

    #[test]
    fn tampered_journal_fails_translation() {
        let spec = full_spec();
        let mut g = generate(&spec).unwrap();
        g.ledger.page_journal.pop();
        let report = verify_generated(&g);
        let translate = report.stages.iter().find(|s| s.stage == "translate").unwrap();
        assert!(!translate.pass, "{}", report.render());
    }

    #[test]
    fn tampered_dma_journal_fails_classification() {
        let spec = full_spec();
        let mut g = generate(&spec).unwrap();
        g.ledger.dma_journal[0].buf_size = 0x1000;
        let report = verify_generated(&g);
        let classify = report.stages.iter().find(|s| s.stage == "classify").unwrap();
        assert!(!classify.pass, "{}", report.render());
    }

    #[test]
    fn render_marks_failures() {
        let spec = full_spec();
        let mut g = generate(&spec).unwrap();
        g.ledger.expect.out_of_window += 1;
        let text = verify_generated(&g).render();
        assert!(text.contains("FAIL"), "{text}");
        assert!(text.lines().next().unwrap().contains("verify_unit"));
    }
}
