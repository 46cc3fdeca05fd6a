//! Next-line prefetcher coverage model.
//!
//! Models the simplest hardware prefetcher: one tracked context that watches
//! for runs of consecutive cachelines. The run length resets whenever an
//! access is not `last + 1`. Once a run is longer than the trigger depth,
//! every further access in it would have been prefetched; the first
//! `trigger` accesses are always demand misses that train the unit.

use serde::Serialize;

pub const DEFAULT_TRIGGER: u32 = 3;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct PrefetchStats {
    pub total: u64,
    pub prefetched: u64,
    pub demand: u64,
}

impl PrefetchStats {
    pub fn rate_pct(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            100.0 * self.prefetched as f64 / self.total as f64
        }
    }
}

#[derive(Debug, Clone)]
pub struct PrefetchModel {
    trigger: u32,
    last: Option<u64>,
    run_len: u32,
    stats: PrefetchStats,
}

impl PrefetchModel {
    pub fn new(trigger: u32) -> Self {
        assert!(trigger >= 1);
        PrefetchModel { trigger, last: None, run_len: 0, stats: PrefetchStats::default() }
    }

    pub fn push(&mut self, line: u64) {
        self.run_len = match self.last {
            Some(last) if line == last.wrapping_add(1) => self.run_len + 1,
            _ => 1,
        };
        self.last = Some(line);
        self.stats.total += 1;
        if self.run_len > self.trigger {
            self.stats.prefetched += 1;
        } else {
            self.stats.demand += 1;
        }
    }

    pub fn finish(self) -> PrefetchStats {
        self.stats
    }
}

pub fn prefetch_coverage(lines: impl IntoIterator<Item = u64>, trigger: u32) -> PrefetchStats {
    let mut m = PrefetchModel::new(trigger);
    for l in lines {
        m.push(l);
    }
    m.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn long_sequential_run_covers_all_but_the_training_prefix() {
        let s = prefetch_coverage(0..1000, DEFAULT_TRIGGER);
        assert_eq!(s.demand, 3);
        assert_eq!(s.prefetched, 997);
        assert_eq!(s.rate_pct(), 99.7);
    }

    #[test]
    fn random_jumps_never_trigger() {
        let s = prefetch_coverage([5u64, 100, 7, 300, 9, 600], DEFAULT_TRIGGER);
        assert_eq!(s.prefetched, 0);
    }

    #[test]
    fn run_exactly_at_trigger_stays_demand() {
        let s = prefetch_coverage(0..3, DEFAULT_TRIGGER);
        assert_eq!(s.prefetched, 0);
        let s = prefetch_coverage(0..4, DEFAULT_TRIGGER);
        assert_eq!(s.prefetched, 1);
    }

    #[test]
    fn single_context_loses_coverage_as_interleaving_tightens() {
        // Two sequential streams interleaved at quantum q: the lone context
        // retrains at every switch, so coverage grows with q and never beats
        // the solo run.
        let interleave = |q: u64| -> f64 {
            let mut t = Vec::new();
            for turn in 0..(1000 / q) {
                for i in 0..q {
                    t.push(1_000 + turn * q + i);
                }
                for i in 0..q {
                    t.push(9_000_000 + turn * q + i);
                }
            }
            prefetch_coverage(t, DEFAULT_TRIGGER).rate_pct()
        };
        let solo = prefetch_coverage(0..1000, DEFAULT_TRIGGER).rate_pct();
        let quanta = [1u64, 2, 4, 8, 20, 50, 100, 250, 500];
        let covs: Vec<f64> = quanta.iter().map(|&q| interleave(q)).collect();
        for pair in covs.windows(2) {
            assert!(pair[0] <= pair[1], "coverage must not drop as quanta widen: {covs:?}");
        }
        assert!(covs[0] == 0.0);
        for c in &covs {
            assert!(*c <= solo);
        }
    }
}
