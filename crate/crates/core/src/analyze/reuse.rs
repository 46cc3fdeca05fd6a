//! Page reuse distance against a depth-capped LRU stack, plus hot-page
//! ranking.
//!
//! Reuse distance of an access is the number of distinct pages touched since
//! the previous access to the same page, counted LRU-style: a page at the
//! top of the stack has distance 1. Distances above the stack depth land in
//! a single overflow bucket, so the stack never grows past `depth`; a page
//! seen before but fallen off the stack is still overflow, which a seen-set
//! keeps separate from cold (first-touch) accesses.

use serde::Serialize;
use std::collections::{BTreeMap, HashSet};

pub const DEFAULT_STACK_DEPTH: usize = 128;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReuseStats {
    pub depth: usize,
    /// `buckets[d-1]` counts accesses at distance `d`, `1 <= d <= depth`.
    pub buckets: Vec<u64>,
    /// Reuses farther away than `depth` distinct pages.
    pub overflow: u64,
    /// First touches.
    pub cold: u64,
}

impl ReuseStats {
    pub fn total(&self) -> u64 {
        self.buckets.iter().sum::<u64>() + self.overflow + self.cold
    }

    /// Fraction of reuses (cold excluded) within `d` in percent.
    pub fn pct_within(&self, d: usize) -> f64 {
        let reuses: u64 = self.buckets.iter().sum::<u64>() + self.overflow;
        if reuses == 0 {
            return 0.0;
        }
        let hit: u64 = self.buckets[..d.min(self.depth)].iter().sum();
        100.0 * hit as f64 / reuses as f64
    }
}

#[derive(Debug, Clone)]
pub struct ReuseTracker {
    depth: usize,
    /// Most recent first. Bounded by `depth`.
    stack: Vec<u64>,
    seen: HashSet<u64>,
    stats: ReuseStats,
}

impl ReuseTracker {
    pub fn new(depth: usize) -> Self {
        assert!(depth >= 1);
        ReuseTracker {
            depth,
            stack: Vec::with_capacity(depth),
            seen: HashSet::new(),
            stats: ReuseStats { depth, buckets: vec![0; depth], overflow: 0, cold: 0 },
        }
    }

    pub fn push(&mut self, page: u64) {
        match self.stack.iter().position(|&p| p == page) {
            Some(idx) => {
                self.stats.buckets[idx] += 1;
                self.stack.remove(idx);
            }
            None if self.seen.contains(&page) => self.stats.overflow += 1,
            None => {
                self.stats.cold += 1;
                self.seen.insert(page);
            }
        }
        self.stack.insert(0, page);
        if self.stack.len() > self.depth {
            self.stack.pop();
        }
    }

    pub fn finish(self) -> ReuseStats {
        self.stats
    }
}

pub fn reuse_distance(pages: impl IntoIterator<Item = u64>, depth: usize) -> ReuseStats {
    let mut t = ReuseTracker::new(depth);
    for p in pages {
        t.push(p);
    }
    t.finish()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct HotPages {
    pub counts: BTreeMap<u64, u64>,
    pub total_accesses: u64,
}

impl HotPages {
    /// Pages by descending access count; count ties break low-page-first.
    pub fn ranked(&self) -> Vec<(u64, u64)> {
        let mut v: Vec<(u64, u64)> = self.counts.iter().map(|(&p, &c)| (p, c)).collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        v
    }

    /// Share of all accesses landing on the `k` hottest pages, in percent.
    pub fn pct_in_top(&self, k: usize) -> f64 {
        if self.total_accesses == 0 {
            return 0.0;
        }
        let top: u64 = self.ranked().iter().take(k).map(|(_, c)| c).sum();
        100.0 * top as f64 / self.total_accesses as f64
    }

    pub fn distinct_pages(&self) -> usize {
        self.counts.len()
    }
}

pub fn hot_pages(pages: impl IntoIterator<Item = u64>) -> HotPages {
    let mut h = HotPages::default();
    for p in pages {
        *h.counts.entry(p).or_insert(0) += 1;
        h.total_accesses += 1;
    }
    h
}
