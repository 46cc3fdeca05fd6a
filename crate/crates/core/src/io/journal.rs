//! JSONL journals: page-table updates and device requests.
//!
//! One JSON object per line so journals can be appended by a shim without
//! rewriting the file. Page journal lines are either a mapping record or
//! `{"op":"unmap","cycle":..,"phys_page":..}`. DMA journal lines are one
//! request each; a missing `cycle_end` means the request never completed.

use crate::dma::{DmaDir, DmaOwner, DmaRequest};
use crate::pagemap::{PageMapping, UnmapEvent};
use serde::{Deserialize, Serialize};
use std::io::{self, BufRead, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum JournalError {
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum UnmapOp {
    Unmap,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct UnmapLine {
    op: UnmapOp,
    cycle: u64,
    phys_page: u64,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum PageLine {
    Unmap(UnmapLine),
    Map(PageMapping),
}

/// Read a page journal, splitting mapping records from unmaps. Blank lines
/// are skipped; anything else must parse, with the 1-based line number
/// reported otherwise.
pub fn read_page_journal(
    r: impl BufRead,
) -> Result<(Vec<PageMapping>, Vec<UnmapEvent>), JournalError> {
    let mut maps = Vec::new();
    let mut unmaps = Vec::new();
    for (idx, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line)
            .map_err(|source| JournalError::Parse { line: idx + 1, source })?
        {
            PageLine::Map(m) => maps.push(m),
            PageLine::Unmap(u) => unmaps.push(UnmapEvent { cycle: u.cycle, phys_page: u.phys_page }),
        }
    }
    Ok((maps, unmaps))
}

/// Write a page journal merged by cycle, unmaps first at equal cycles to
/// match how the index applies them.
pub fn write_page_journal(
    mut w: impl Write,
    maps: &[PageMapping],
    unmaps: &[UnmapEvent],
) -> io::Result<()> {
    let (mut mi, mut ui) = (0, 0);
    loop {
        let take_unmap = match (maps.get(mi), unmaps.get(ui)) {
            (None, None) => break,
            (Some(_), None) => false,
            (None, Some(_)) => true,
            (Some(m), Some(u)) => u.cycle <= m.cycle,
        };
        let json = if take_unmap {
            let u = &unmaps[ui];
            ui += 1;
            serde_json::to_string(&UnmapLine {
                op: UnmapOp::Unmap,
                cycle: u.cycle,
                phys_page: u.phys_page,
            })
        } else {
            mi += 1;
            serde_json::to_string(&maps[mi - 1])
        };
        writeln!(w, "{}", json.map_err(io::Error::other)?)?;
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DmaLine {
    id: u32,
    owner: DmaOwner,
    dir: DmaDir,
    buf_start: u64,
    buf_size: u64,
    cycle_begin: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cycle_end: Option<u64>,
}

pub fn read_dma_journal(r: impl BufRead) -> Result<Vec<DmaRequest>, JournalError> {
    let mut out = Vec::new();
    for (idx, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let l: DmaLine = serde_json::from_str(&line)
            .map_err(|source| JournalError::Parse { line: idx + 1, source })?;
        out.push(DmaRequest {
            id: l.id,
            owner: l.owner,
            dir: l.dir,
            buf_start: l.buf_start,
            buf_size: l.buf_size,
            cycle_begin: l.cycle_begin,
            cycle_end: l.cycle_end.unwrap_or(u64::MAX),
        });
    }
    Ok(out)
}

pub fn write_dma_journal(mut w: impl Write, requests: &[DmaRequest]) -> io::Result<()> {
    for r in requests {
        let line = DmaLine {
            id: r.id,
            owner: r.owner,
            dir: r.dir,
            buf_start: r.buf_start,
            buf_size: r.buf_size,
            cycle_begin: r.cycle_begin,
            cycle_end: (r.cycle_end != u64::MAX).then_some(r.cycle_end),
        };
        writeln!(w, "{}", serde_json::to_string(&line).map_err(io::Error::other)?)?;
    }
    Ok(())
}
