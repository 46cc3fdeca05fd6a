//! Stream (constant-stride run) detection and the stream-covered ratio.
//!
//! A candidate stream is born from each consecutive access pair whose
//! difference is nonzero, provided the second access did not land on an
//! existing candidate. An access extends the candidate that predicted it
//! exactly; when several predict it, the one extended most recently wins.
//! Candidates whose last hit has fallen more than `window` accesses behind
//! stop matching, so unrelated traffic can interleave only so far before a
//! stream breaks.
//!
//! An access counts as stream-covered once its candidate has at least
//! `min_len` members. Reaching `min_len` retroactively covers the members
//! that arrived earlier, so a length-3 stream covers 3 accesses, not 1. A
//! position that already counted for another stream is not counted twice,
//! which keeps covered <= total.

use serde::Serialize;
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamConfig {
    /// How many accesses a candidate's tail may lag before it stops matching.
    pub window: usize,
    /// Members needed before a candidate counts as a stream.
    pub min_len: u32,
}

impl Default for StreamConfig {
    fn default() -> Self {
        StreamConfig { window: 32, min_len: 3 }
    }
}

/// A candidate that reached `min_len`, reported once it can no longer grow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct StreamRecord {
    pub start_addr: u64,
    pub stride: i64,
    pub length: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StreamStats {
    pub total_accesses: u64,
    pub stream_accesses: u64,
    pub streams: Vec<StreamRecord>,
    /// Detected streams per stride.
    pub stride_histogram: BTreeMap<i64, u64>,
}

impl StreamStats {
    pub fn scr_pct(&self) -> f64 {
        if self.total_accesses == 0 {
            0.0
        } else {
            100.0 * self.stream_accesses as f64 / self.total_accesses as f64
        }
    }

    /// Cumulative fraction of stream-member accesses at or below each stride,
    /// stride-ascending, length-weighted.
    pub fn stride_cdf(&self) -> Vec<(i64, f64)> {
        let mut weight: BTreeMap<i64, u64> = BTreeMap::new();
        for s in &self.streams {
            *weight.entry(s.stride).or_insert(0) += u64::from(s.length);
        }
        let total: u64 = weight.values().sum();
        if total == 0 {
            return Vec::new();
        }
        let mut cum = 0u64;
        weight
            .into_iter()
            .map(|(stride, w)| {
                cum += w;
                (stride, cum as f64 / total as f64)
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
struct Candidate {
    start_addr: u64,
    stride: i64,
    expected: u64,
    len: u32,
    /// Position of the most recent member.
    tail_pos: u64,
    /// Member positions, kept only until the candidate reaches `min_len`.
    pending: Vec<u64>,
}

#[derive(Debug, Clone)]
pub struct StreamDetector {
    cfg: StreamConfig,
    pos: u64,
    prev: Option<u64>,
    candidates: Vec<Candidate>,
    counted: Vec<bool>,
    stats: StreamStats,
}

impl StreamDetector {
    pub fn new(cfg: StreamConfig) -> Self {
        assert!(cfg.min_len >= 2, "a stream needs at least a pair");
        assert!(cfg.window >= 1);
        StreamDetector {
            cfg,
            pos: 0,
            prev: None,
            candidates: Vec::new(),
            counted: Vec::new(),
            stats: StreamStats::default(),
        }
    }

    pub fn push(&mut self, addr: u64) {
        let p = self.pos;
        self.pos += 1;
        self.stats.total_accesses += 1;
        self.counted.push(false);

        // Retire candidates that can no longer match anything.
        let window = self.cfg.window as u64;
        let mut retired = Vec::new();
        self.candidates.retain(|c| {
            if p - c.tail_pos <= window {
                return true;
            }
            retired.push(c.clone());
            false
        });
        for c in retired {
            self.retire(c);
        }

        // Extension target: the matching candidate with the freshest tail.
        let hit = self
            .candidates
            .iter_mut()
            .filter(|c| c.expected == addr)
            .max_by_key(|c| c.tail_pos);
        if let Some(c) = hit {
            c.len += 1;
            c.tail_pos = p;
            c.expected = c.expected.wrapping_add(c.stride as u64);
            if c.len < self.cfg.min_len {
                c.pending.push(p);
            } else if c.len == self.cfg.min_len {
                c.pending.push(p);
                for &m in &c.pending {
                    let m = m as usize;
                    if !self.counted[m] {
                        self.counted[m] = true;
                        self.stats.stream_accesses += 1;
                    }
                }
                c.pending = Vec::new();
            } else if !self.counted[p as usize] {
                self.counted[p as usize] = true;
                self.stats.stream_accesses += 1;
            }
            self.prev = Some(addr);
            return;
        }

        // No candidate predicted this access: pair it with its predecessor.
        if let Some(prev) = self.prev {
            let stride = addr.wrapping_sub(prev) as i64;
            if stride != 0 {
                let mut c = Candidate {
                    start_addr: prev,
                    stride,
                    expected: addr.wrapping_add(stride as u64),
                    len: 2,
                    tail_pos: p,
                    pending: vec![p - 1, p],
                };
                if c.len >= self.cfg.min_len {
                    for &m in &c.pending {
                        let m = m as usize;
                        if !self.counted[m] {
                            self.counted[m] = true;
                            self.stats.stream_accesses += 1;
                        }
                    }
                    c.pending = Vec::new();
                }
                self.candidates.push(c);
            }
        }
        self.prev = Some(addr);
    }

    fn retire(&mut self, c: Candidate) {
        if c.len >= self.cfg.min_len {
            self.stats.streams.push(StreamRecord {
                start_addr: c.start_addr,
                stride: c.stride,
                length: c.len,
            });
            *self.stats.stride_histogram.entry(c.stride).or_insert(0) += 1;
        }
    }

    pub fn finish(mut self) -> StreamStats {
        for c in std::mem::take(&mut self.candidates) {
            self.retire(c);
        }
        self.stats
    }
}

pub fn detect_streams(
    accesses: impl IntoIterator<Item = u64>,
    cfg: StreamConfig,
) -> StreamStats {
    let mut d = StreamDetector::new(cfg);
    for a in accesses {
        d.push(a);
    }
    d.finish()
}

/// Run one detector per pid over an interleaved `(pid, access)` stream.
pub fn scr_by_pid(
    accesses: impl IntoIterator<Item = (u32, u64)>,
    cfg: StreamConfig,
) -> BTreeMap<u32, StreamStats> {
    let mut per_pid: BTreeMap<u32, StreamDetector> = BTreeMap::new();
    for (pid, a) in accesses {
        per_pid
            .entry(pid)
            .or_insert_with(|| StreamDetector::new(cfg))
            .push(a);
    }
    per_pid.into_iter().map(|(pid, d)| (pid, d.finish())).collect()
}
