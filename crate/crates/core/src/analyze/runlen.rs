//! Same-process run lengths.
//!
//! A run is a maximal stretch of consecutive references from one pid. Run
//! lengths always sum to the reference count. The histogram shows how long a
//! process keeps the memory bus to itself before another one cuts in: under
//! a quantum-q scheduler the runs cap out near q.

use serde::Serialize;
use std::collections::BTreeMap;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RunLenStats {
    /// run length -> number of runs of that length
    pub histogram: BTreeMap<u64, u64>,
    pub total_runs: u64,
    pub total_refs: u64,
    pub max_run: u64,
}

impl RunLenStats {
    /// Fraction of runs no longer than `len`, in percent.
    pub fn pct_runs_at_most(&self, len: u64) -> f64 {
        if self.total_runs == 0 {
            return 0.0;
        }
        let n: u64 = self.histogram.range(..=len).map(|(_, c)| c).sum();
        100.0 * n as f64 / self.total_runs as f64
    }

    /// (length, cumulative fraction of runs) pairs, length-ascending.
    pub fn cdf(&self) -> Vec<(u64, f64)> {
        let mut cum = 0u64;
        self.histogram
            .iter()
            .map(|(&len, &n)| {
                cum += n;
                (len, cum as f64 / self.total_runs as f64)
            })
            .collect()
    }

    pub fn mean_run(&self) -> f64 {
        if self.total_runs == 0 {
            0.0
        } else {
            self.total_refs as f64 / self.total_runs as f64
        }
    }

    fn close(&mut self, run: u64) {
        *self.histogram.entry(run).or_insert(0) += 1;
        self.total_runs += 1;
        self.max_run = self.max_run.max(run);
    }
}

/// Histogram maximal same-pid runs of a pid-labelled reference stream.
pub fn run_lengths(pids: impl IntoIterator<Item = u32>) -> RunLenStats {
    let mut stats = RunLenStats::default();
    let mut current: Option<u32> = None;
    let mut run = 0u64;
    for pid in pids {
        stats.total_refs += 1;
        if current == Some(pid) {
            run += 1;
        } else {
            if run > 0 {
                stats.close(run);
            }
            current = Some(pid);
            run = 1;
        }
    }
    if run > 0 {
        stats.close(run);
    }
    stats
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn runs_split_at_pid_changes() {
        let s = run_lengths([1u32, 1, 1, 2, 2, 1]);
        assert_eq!(s.histogram, BTreeMap::from([(1, 1), (2, 1), (3, 1)]));
        assert_eq!(s.total_runs, 3);
        assert_eq!(s.total_refs, 6);
    }

    #[test]
    fn single_pid_is_one_run() {
        let s = run_lengths(std::iter::repeat(7).take(500));
        assert_eq!(s.histogram, BTreeMap::from([(500, 1)]));
        assert_eq!(s.max_run, 500);
        assert_eq!(s.mean_run(), 500.0);
    }

    #[test]
    fn run_lengths_sum_to_ref_count() {
        let pids: Vec<u32> = (0..997).map(|i| ((i * 2654435761u64) >> 13) as u32 % 5).collect();
        let s = run_lengths(pids);
        let weighted: u64 = s.histogram.iter().map(|(len, n)| len * n).sum();
        assert_eq!(weighted, s.total_refs);
        assert_eq!(weighted, 997);
    }

    #[test]
    fn quantum_interleave_caps_runs_at_the_quantum() {
        let q = 40;
        let mut pids = Vec::new();
        for _ in 0..25 {
            pids.extend(std::iter::repeat(1u32).take(q));
            pids.extend(std::iter::repeat(2u32).take(q));
        }
        let s = run_lengths(pids);
        assert_eq!(s.max_run, q as u64);
        assert_eq!(s.pct_runs_at_most(q as u64), 100.0);
        assert_eq!(s.pct_runs_at_most(q as u64 - 1), 0.0);
    }

    #[test]
    fn alternating_pids_are_all_singletons() {
        let s = run_lengths((0..10).map(|i| i % 2));
        assert_eq!(s.max_run, 1);
        assert_eq!(s.total_runs, 10);
    }

    #[test]
    fn cdf_reaches_one() {
        let s = run_lengths([1u32, 1, 2, 1, 1, 1, 3]);
        let cdf = s.cdf();
        assert_eq!(cdf.last().unwrap().1, 1.0);
        assert_eq!(cdf, vec![(1, 0.5), (2, 0.75), (3, 1.0)]);
    }

    #[test]
    fn empty_stream() {
        let s = run_lengths(std::iter::empty());
        assert_eq!(s.total_runs, 0);
        assert_eq!(s.mean_run(), 0.0);
        assert_eq!(s.pct_runs_at_most(10), 0.0);
    }
}
