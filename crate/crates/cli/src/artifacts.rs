//! Output plumbing shared by every subcommand: atomic writes, input digests
//! and the run manifest.
//!
//! Nothing here is timestamped, so re-running a command on identical inputs
//! reproduces every output byte for byte, manifest included.

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

/// Record of one command run, dropped beside its primary output as
/// `<output>.manifest.json`.
#[derive(Serialize)]
pub struct RunManifest {
    pub schema: &'static str,
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    /// Command line as invoked, program name dropped.
    pub argv: Vec<String>,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<String>,
}

#[derive(Serialize)]
pub struct InputDigest {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

impl RunManifest {
    pub fn new(command: &'static str) -> Self {
        RunManifest {
            schema: "dimmtrace.manifest.v1",
            tool: "dimmtrace",
            version: env!("CARGO_PKG_VERSION"),
            command,
            argv: std::env::args().skip(1).collect(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    /// Digest one input file into the manifest.
    pub fn input(&mut self, path: &Path) -> Result<()> {
        let f = File::open(path).with_context(|| format!("open {}", path.display()))?;
        let mut r = BufReader::new(f);
        let mut hasher = Sha256::new();
        let mut buf = [0u8; 64 * 1024];
        let mut total = 0u64;
        loop {
            let n = r.read(&mut buf)?;
            if n == 0 {
                break;
            }
            hasher.update(&buf[..n]);
            total += n as u64;
        }
        self.inputs.push(InputDigest {
            path: path.display().to_string(),
            bytes: total,
            sha256: hex(&hasher.finalize()),
        });
        Ok(())
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    /// Write the manifest beside `primary`.
    pub fn write_beside(&self, primary: &Path) -> Result<PathBuf> {
        let path = manifest_path(primary);
        write_json(&path, self)?;
        Ok(path)
    }
}

pub fn manifest_path(primary: &Path) -> PathBuf {
    let mut name = primary.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    primary.with_file_name(name)
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Write `path` atomically: bytes land in a temp file in the target
/// directory and are renamed into place only after a successful flush, so a
/// failed run never leaves a partial output.
pub fn atomic_write(
    path: &Path,
    write: impl FnOnce(&mut dyn Write) -> Result<()>,
) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).with_context(|| format!("create {}", dir.display()))?;
    let mut tmp = tempfile::Builder::new()
        .prefix(".dimmtrace-tmp.")
        .tempfile_in(dir)
        .with_context(|| format!("temp file in {}", dir.display()))?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        write(&mut w)?;
        w.flush()?;
    }
    tmp.persist(path)
        .with_context(|| format!("rename into {}", path.display()))?;
    Ok(())
}

/// Pretty JSON plus trailing newline.
pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    atomic_write(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)?;
        Ok(())
    })
}

/// CSV with a schema-version comment line above the column header.
pub fn write_csv(
    path: &Path,
    schema: &str,
    columns: &str,
    rows: impl IntoIterator<Item = String>,
) -> Result<()> {
    atomic_write(path, |w| {
        writeln!(w, "# {schema}")?;
        writeln!(w, "{columns}")?;
        for row in rows {
            writeln!(w, "{row}")?;
        }
        Ok(())
    })
}
