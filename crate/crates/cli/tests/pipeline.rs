//! End-to-end runs of the installed binary: every stage wired through real
//! files, plus the exit-code contract.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dimmtrace"))
}

fn scenario_dir(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("spawn dimmtrace");
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// gen -> decode -> encode -> decode-trace leaves the reference file
/// byte-identical, and every output gets a manifest.
#[test]
fn pack_unpack_round_trip_via_files() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();

    run_ok(bin()
        .arg("gen")
        .arg(scenario_dir("sequential_1024").join("scenario.json"))
        .arg("--out-dir")
        .arg(dir));

    let hmtc = dir.join("sequential_1024.ch0.hmtc");
    let refs = dir.join("seq.refs");
    run_ok(bin().arg("decode").arg(&hmtc).arg("--out").arg(&refs));

    let hmtt = dir.join("seq.hmtt");
    run_ok(bin()
        .args(["encode"])
        .arg(&refs)
        .arg("--out")
        .arg(&hmtt)
        .args(["--epoch", "1000"]));

    let back = dir.join("seq.back.refs");
    run_ok(bin().arg("decode-trace").arg(&hmtt).arg("--out").arg(&back));

    assert_eq!(fs::read(&refs).unwrap(), fs::read(&back).unwrap());
    for f in [&refs, &hmtt, &back] {
        let manifest = f.with_file_name(format!(
            "{}.manifest.json",
            f.file_name().unwrap().to_string_lossy()
        ));
        assert!(manifest.exists(), "missing manifest for {}", f.display());
    }
    assert!(dir.join("seq.refs.stats.json").exists());
}

/// Two channels decoded separately, packed, merged, unpacked: counts add up
/// and the cycle sequence is sorted.
#[test]
fn merge_two_channels() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let spec = dir.join("spec.json");
    fs::write(
        &spec,
        r#"{
  "name": "mergetest",
  "seed": 9,
  "config": {
    "freq_mhz": 400, "bus_width_bits": 128, "cacheline_bytes": 64,
    "burst_length": 4, "tccd": 2, "bank_count": 8, "row_bits": 13, "col_bits": 10
  },
  "config_space": { "base": 268435456, "size": 8192 },
  "channels": 2,
  "actors": [
    { "kind": "sequential", "start": 1073741824, "count": 500, "stride": 64, "channel": 0 },
    { "kind": "random", "count": 400, "range_start": 536870912, "range_len": 1048576, "channel": 1 }
  ]
}"#,
    )
    .unwrap();
    run_ok(bin().arg("gen").arg(&spec).arg("--out-dir").arg(dir));

    for ch in 0..2 {
        run_ok(bin()
            .arg("decode")
            .arg(dir.join(format!("mergetest.ch{ch}.hmtc")))
            .arg("--out")
            .arg(dir.join(format!("ch{ch}.refs")))
            .args(["--channel", &ch.to_string()]));
        run_ok(bin()
            .arg("encode")
            .arg(dir.join(format!("ch{ch}.refs")))
            .arg("--out")
            .arg(dir.join(format!("ch{ch}.hmtt")))
            .args(["--epoch", "1000"]));
    }
    let out = run_ok(bin()
        .arg("merge")
        .arg(dir.join("ch0.hmtt"))
        .arg(dir.join("ch1.hmtt"))
        .arg("--out")
        .arg(dir.join("merged.hmtt")));
    assert!(stdout_of(&out).contains("900 refs"), "{}", stdout_of(&out));

    run_ok(bin()
        .arg("decode-trace")
        .arg(dir.join("merged.hmtt"))
        .arg("--out")
        .arg(dir.join("merged.refs")));

    let (_, _, records) =
        dimmtrace::io::refs::read_refs(fs::File::open(dir.join("merged.refs")).unwrap()).unwrap();
    assert_eq!(records.len(), 900);
    assert!(records.windows(2).all(|w| w[0].phys.cycle <= w[1].phys.cycle));
}

/// Overlay splits events out, classify-dma reproduces the planted label mix,
/// translate reports the planted miss rate. All through the binary.
#[test]
fn overlay_classify_translate() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();

    run_ok(bin()
        .arg("gen")
        .arg(scenario_dir("filecopy_like").join("scenario.json"))
        .arg("--out-dir")
        .arg(dir));
    run_ok(bin()
        .arg("decode")
        .arg(dir.join("filecopy_like.ch0.hmtc"))
        .arg("--out")
        .arg(dir.join("fc.refs")));
    run_ok(bin()
        .arg("encode")
        .arg(dir.join("fc.refs"))
        .arg("--out")
        .arg(dir.join("fc.hmtt"))
        .args(["--epoch", "1000"])
        .args(["--config-space-base", "0x10000000"])
        .args(["--config-space-size", "0x100000"]));
    let out = run_ok(bin()
        .arg("overlay")
        .arg(dir.join("fc.hmtt"))
        .arg("--normal-out")
        .arg(dir.join("fc.normal.refs"))
        .arg("--events-out")
        .arg(dir.join("fc.events.jsonl")));
    assert!(stdout_of(&out).contains("102400 normal refs, 46 events, 0 warnings"));

    run_ok(bin()
        .arg("classify-dma")
        .arg(dir.join("fc.normal.refs"))
        .arg("--dma")
        .arg(dir.join("filecopy_like.dma.jsonl"))
        .arg("--events")
        .arg(dir.join("fc.events.jsonl"))
        .arg("--out")
        .arg(dir.join("fc.labeled.refs"))
        .arg("--summary")
        .arg(dir.join("fc.dma.json")));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("fc.dma.json")).unwrap()).unwrap();
    assert_eq!(summary["labeled_total"], 102400);
    assert_eq!(summary["label_counts"]["cpu_read"], 46080);
    assert_eq!(summary["label_counts"]["cpu_write"], 24576);
    assert_eq!(summary["label_counts"]["dma_read"], 16384);
    assert_eq!(summary["label_counts"]["dma_write"], 15360);

    // Translation on a scenario with journaled mappings.
    run_ok(bin()
        .arg("gen")
        .arg(scenario_dir("translation_miss").join("scenario.json"))
        .arg("--out-dir")
        .arg(dir));
    run_ok(bin()
        .arg("decode")
        .arg(dir.join("translation_miss.ch0.hmtc"))
        .arg("--out")
        .arg(dir.join("tm.refs")));
    let out = run_ok(bin()
        .arg("translate")
        .arg(dir.join("tm.refs"))
        .arg("--pagemap")
        .arg(dir.join("translation_miss.pagemap.jsonl"))
        .arg("--out")
        .arg(dir.join("tm.virt.refs")));
    assert!(stdout_of(&out).contains("(2.00%)"), "{}", stdout_of(&out));
}

/// Every analyze kind writes its JSON and CSV with versioned schemas.
#[test]
fn analyze_outputs_carry_schemas() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    run_ok(bin()
        .arg("gen")
        .arg(scenario_dir("two_core_interleave").join("scenario.json"))
        .arg("--out-dir")
        .arg(dir));
    run_ok(bin()
        .arg("decode")
        .arg(dir.join("two_core_interleave.ch0.hmtc"))
        .arg("--out")
        .arg(dir.join("tc.refs")));
    run_ok(bin()
        .arg("translate")
        .arg(dir.join("tc.refs"))
        .arg("--pagemap")
        .arg(dir.join("two_core_interleave.pagemap.jsonl"))
        .arg("--out")
        .arg(dir.join("tc.virt.refs")));

    let plain: &[&str] = &["scr", "prefetch", "reuse", "hot", "intervals", "stride-cdf"];
    for kind in plain {
        let json = dir.join(format!("{kind}.json"));
        let csv = dir.join(format!("{kind}.csv"));
        run_ok(bin()
            .args(["analyze", kind])
            .arg(dir.join("tc.refs"))
            .arg("--json")
            .arg(&json)
            .arg("--csv")
            .arg(&csv));
        let parsed: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
        let schema = parsed["schema"].as_str().unwrap_or_default();
        assert!(
            schema.starts_with("dimmtrace.") && schema.ends_with(".v1"),
            "{kind}: schema {schema:?}"
        );
        let first = fs::read_to_string(&csv).unwrap();
        assert!(first.starts_with("# dimmtrace."), "{kind}: csv header {first:.40}");
    }

    // runlen needs pids, so it runs on the translated file.
    run_ok(bin()
        .args(["analyze", "runlen"])
        .arg(dir.join("tc.virt.refs"))
        .arg("--json")
        .arg(dir.join("runlen.json"))
        .arg("--csv")
        .arg(dir.join("runlen.csv")));
    // ...and refuses the bare one with a data error.
    let out = bin()
        .args(["analyze", "runlen"])
        .arg(dir.join("tc.refs"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = run_ok(bin().args([
        "analyze", "bwmodel", "--freq", "400", "--bus", "128", "--line", "64", "--bitwidth", "40",
    ]));
    assert_eq!(stdout_of(&out).trim(), "4 Gb/s");
}

#[test]
fn exit_codes() {
    // Usage problems: unknown flag, bad value.
    let out = bin().args(["decode", "--bogus"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = bin()
        .args(["analyze", "bwmodel", "--freq", "400", "--bus", "96", "--line", "64", "--bitwidth", "40"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1), "bus width 96 should be a usage error");

    // Data problems: missing file leaves no partial output.
    let tmp = tempfile::tempdir().unwrap();
    let out_path = tmp.path().join("nested/dir/x.refs");
    let out = bin()
        .arg("decode")
        .arg(tmp.path().join("missing.hmtc"))
        .arg("--out")
        .arg(&out_path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(!out_path.exists());

    // Help and version are not errors.
    assert_eq!(bin().arg("--help").output().unwrap().status.code(), Some(0));
    assert_eq!(bin().arg("--version").output().unwrap().status.code(), Some(0));
}

/// Same verify command twice: same bytes out, exit 0.
#[test]
fn verify_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let report = |n: u32| tmp.path().join(format!("report{n}.txt"));
    for n in [1, 2] {
        let out = run_ok(bin()
            .arg("verify")
            .arg(scenario_dir("sequential_1024"))
            .arg("--report")
            .arg(report(n)));
        assert!(stdout_of(&out).contains("PASS"));
    }
    assert_eq!(
        fs::read(report(1)).unwrap(),
        fs::read(report(2)).unwrap()
    );
}
