//! Multi-channel trace merge.
//!
//! Channels are captured against one shared cycle clock, so joining them is a
//! k-way merge keyed on `(cycle, channel id)`. Within a channel, order is
//! preserved even across equal cycles; a channel whose cycles regress aborts
//! the merge rather than silently producing a misordered trace.

use crate::ddr::PhysRef;
use std::collections::BinaryHeap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MergeError {
    #[error("input {input} is not cycle-ordered: {cycle} after {prev}")]
    UnsortedChannel { input: usize, cycle: u64, prev: u64 },
}

struct HeapEntry {
    r: PhysRef,
    input: usize,
}

impl HeapEntry {
    fn key(&self) -> (u64, u16, usize) {
        (self.r.cycle, self.r.channel, self.input)
    }
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Reversed: BinaryHeap is a max-heap, we pop the smallest key.
        other.key().cmp(&self.key())
    }
}

/// Streaming k-way merge. Yields an error once and then fuses.
pub struct MergeIter<I: Iterator<Item = PhysRef>> {
    inputs: Vec<I>,
    last_cycle: Vec<Option<u64>>,
    heap: BinaryHeap<HeapEntry>,
    failed: bool,
}

impl<I: Iterator<Item = PhysRef>> MergeIter<I> {
    pub fn new(mut inputs: Vec<I>) -> Self {
        let mut heap = BinaryHeap::with_capacity(inputs.len());
        for (input, it) in inputs.iter_mut().enumerate() {
            if let Some(r) = it.next() {
                heap.push(HeapEntry { r, input });
            }
        }
        let last_cycle = vec![None; inputs.len()];
        MergeIter { inputs, last_cycle, heap, failed: false }
    }
}

impl<I: Iterator<Item = PhysRef>> Iterator for MergeIter<I> {
    type Item = Result<PhysRef, MergeError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        let HeapEntry { r, input } = self.heap.pop()?;
        if let Some(prev) = self.last_cycle[input] {
            if r.cycle < prev {
                self.failed = true;
                return Some(Err(MergeError::UnsortedChannel { input, cycle: r.cycle, prev }));
            }
        }
        self.last_cycle[input] = Some(r.cycle);
        if let Some(next) = self.inputs[input].next() {
            self.heap.push(HeapEntry { r: next, input });
        }
        Some(Ok(r))
    }
}

/// Merge fully materialized channels.
pub fn merge_channels(channels: Vec<Vec<PhysRef>>) -> Result<Vec<PhysRef>, MergeError> {
    MergeIter::new(channels.into_iter().map(Vec::into_iter).collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ddr::Rw;

    fn r(cycle: u64, channel: u16, addr: u64) -> PhysRef {
        PhysRef { addr, rw: Rw::Read, cycle, channel }
    }

    #[test]
    fn merges_by_cycle_then_channel() {
        let a = vec![r(1, 0, 0x00), r(5, 0, 0x40), r(5, 0, 0x80)];
        let b = vec![r(2, 1, 0xc0), r(5, 1, 0x100)];
        let merged = merge_channels(vec![a, b]).unwrap();
        let key: Vec<(u64, u16, u64)> = merged.iter().map(|x| (x.cycle, x.channel, x.addr)).collect();
        assert_eq!(
            key,
            vec![
                (1, 0, 0x00),
                (2, 1, 0xc0),
                (5, 0, 0x40),
                (5, 0, 0x80),
                (5, 1, 0x100),
            ]
        );
    }

    #[test]
    fn equal_cycles_within_a_channel_keep_input_order() {
        let a = vec![r(7, 0, 1 * 64), r(7, 0, 2 * 64), r(7, 0, 3 * 64)];
        let merged = merge_channels(vec![a.clone(), vec![r(7, 1, 0)]]).unwrap();
        let ours: Vec<u64> = merged.iter().filter(|x| x.channel == 0).map(|x| x.addr).collect();
        assert_eq!(ours, vec![64, 128, 192]);
    }

    #[test]
    fn unsorted_channel_is_an_error() {
        let bad = vec![r(10, 0, 0), r(4, 0, 64)];
        assert_eq!(
            merge_channels(vec![bad, vec![r(0, 1, 0)]]),
            Err(MergeError::UnsortedChannel { input: 0, cycle: 4, prev: 10 })
        );
    }

    #[test]
    fn empty_inputs_are_fine() {
        assert_eq!(merge_channels(vec![]).unwrap(), vec![]);
        assert_eq!(merge_channels(vec![vec![], vec![r(1, 0, 0)]]).unwrap(), vec![r(1, 0, 0)]);
    }
}
