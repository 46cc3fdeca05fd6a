//! K-way channel merge vs flatten-and-sort.
//!
//! The merge is a streaming heap; the oracle concatenates all channels and
//! stable-sorts on (cycle, channel id). Within one channel equal cycles keep
//! capture order under both, so the results must be identical element-wise.

use dimmtrace::ddr::{PhysRef, Rw};
use dimmtrace::merge::{merge_channels, MergeError};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

fn random_channels(rng: &mut ChaCha8Rng, count: u16) -> Vec<Vec<PhysRef>> {
    let mut addr_tag = 0u64;
    (0..count)
        .map(|channel| {
            let len = rng.gen_range(0..400);
            let mut cycle = rng.gen_range(0..8u64);
            (0..len)
                .map(|_| {
                    // Zero gaps keep equal cycles common, both within a
                    // channel and across channels.
                    cycle += rng.gen_range(0..3u64);
                    addr_tag += 64;
                    PhysRef {
                        addr: addr_tag,
                        rw: if rng.gen_bool(0.3) { Rw::Write } else { Rw::Read },
                        cycle,
                        channel,
                    }
                })
                .collect()
        })
        .collect()
}

fn full_sort(channels: &[Vec<PhysRef>]) -> Vec<PhysRef> {
    let mut all: Vec<PhysRef> = channels.iter().flatten().copied().collect();
    all.sort_by_key(|r| (r.cycle, r.channel));
    all
}

#[test]
fn matches_full_sort_on_randomized_three_channel_inputs() {
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(0x4E_46 + seed);
        let channels = random_channels(&mut rng, 3);
        let want = full_sort(&channels);
        let got = merge_channels(channels).expect("sorted inputs merge cleanly");
        assert_eq!(got, want, "seed {seed}");
    }
}

#[test]
fn matches_full_sort_on_other_widths() {
    for (seed, count) in [(7u64, 1u16), (8, 2), (9, 4), (10, 8)] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let channels = random_channels(&mut rng, count);
        let want = full_sort(&channels);
        assert_eq!(merge_channels(channels).unwrap(), want);
    }
}

#[test]
fn equal_cycles_order_by_channel_id() {
    let mk = |cycle, channel, addr| PhysRef { addr, rw: Rw::Read, cycle, channel };
    let channels = vec![
        vec![mk(7, 0, 0x000), mk(7, 0, 0x040)],
        vec![mk(7, 1, 0x080)],
        vec![mk(7, 2, 0x0c0), mk(9, 2, 0x100)],
    ];
    let merged = merge_channels(channels).unwrap();
    let addrs: Vec<u64> = merged.iter().map(|r| r.addr).collect();
    assert_eq!(addrs, vec![0x000, 0x040, 0x080, 0x0c0, 0x100]);
}

#[test]
fn empty_inputs() {
    assert_eq!(merge_channels(Vec::new()).unwrap(), Vec::new());
    assert_eq!(merge_channels(vec![Vec::new(), Vec::new()]).unwrap(), Vec::new());

    let only = vec![PhysRef { addr: 0x40, rw: Rw::Write, cycle: 3, channel: 5 }];
    let merged = merge_channels(vec![Vec::new(), only.clone(), Vec::new()]).unwrap();
    assert_eq!(merged, only);
}

#[test]
fn regressing_cycle_aborts_with_the_offending_input() {
    let mk = |cycle| PhysRef { addr: 0x40, rw: Rw::Read, cycle, channel: 1 };
    let channels = vec![
        vec![PhysRef { addr: 0, rw: Rw::Read, cycle: 1, channel: 0 }],
        vec![mk(5), mk(3)],
    ];
    assert_eq!(
        merge_channels(channels),
        Err(MergeError::UnsortedChannel { input: 1, cycle: 3, prev: 5 })
    );
}
