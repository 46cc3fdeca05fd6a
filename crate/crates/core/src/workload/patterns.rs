//! Access-sequence models that are more than a stride.

use crate::ddr::Rw;
use rand::Rng;

/// Element-index accesses of an in-place quicksort over a shuffled array.
///
/// The initial shuffle models pre-trace state and is not recorded. During the
/// sort every comparison read and every swap store is. Hoare partitioning,
/// middle-element pivot; the explicit stack keeps worst-case recursion off
/// the call stack.
pub fn quicksort_accesses(elements: u32, rng: &mut impl Rng) -> Vec<(u32, Rw)> {
    let n = elements as usize;
    let mut data: Vec<u32> = (0..elements).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        data.swap(i, j);
    }

    let mut acc = Vec::new();
    let mut stack = vec![(0usize, n - 1)];
    while let Some((lo, hi)) = stack.pop() {
        if lo >= hi {
            continue;
        }
        let mid = lo + (hi - lo) / 2;
        let pivot = data[mid];
        acc.push((mid as u32, Rw::Read));

        let mut i = lo as isize - 1;
        let mut j = hi as isize + 1;
        loop {
            loop {
                i += 1;
                acc.push((i as u32, Rw::Read));
                if data[i as usize] >= pivot {
                    break;
                }
            }
            loop {
                j -= 1;
                acc.push((j as u32, Rw::Read));
                if data[j as usize] <= pivot {
                    break;
                }
            }
            if i >= j {
                break;
            }
            data.swap(i as usize, j as usize);
            acc.push((i as u32, Rw::Write));
            acc.push((j as u32, Rw::Write));
        }
        let split = j as usize;
        stack.push((lo, split));
        stack.push((split + 1, hi));
    }
    debug_assert!(data.windows(2).all(|w| w[0] <= w[1]));
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn replay_sorts(elements: u32, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shuffled: Vec<u32> = {
            let n = elements as usize;
            let mut data: Vec<u32> = (0..elements).collect();
            for i in (1..n).rev() {
                let j = rng.gen_range(0..=i);
                data.swap(i, j);
            }
            data
        };
        // Replaying the recorded writes against the shuffled array must sort
        // it: each swap shows up as two writes at the swapped indices.
        let mut rng2 = ChaCha8Rng::seed_from_u64(seed);
        let acc = quicksort_accesses(elements, &mut rng2);
        let mut replay = shuffled;
        let writes: Vec<u32> = acc
            .iter()
            .filter(|(_, rw)| *rw == Rw::Write)
            .map(|(i, _)| *i)
            .collect();
        assert!(writes.len() % 2 == 0);
        for pair in writes.chunks(2) {
            replay.swap(pair[0] as usize, pair[1] as usize);
        }
        assert!(replay.windows(2).all(|w| w[0] <= w[1]), "replay did not sort");
    }

    #[test]
    fn recorded_swaps_sort_the_array() {
        for seed in 0..8 {
            replay_sorts(257, seed);
        }
        replay_sorts(2, 0);
        replay_sorts(3, 1);
    }

    #[test]
    fn indices_stay_in_bounds_and_mix_reads_and_writes() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let acc = quicksort_accesses(1024, &mut rng);
        assert!(acc.iter().all(|(i, _)| *i < 1024));
        assert!(acc.iter().any(|(_, rw)| *rw == Rw::Read));
        assert!(acc.iter().any(|(_, rw)| *rw == Rw::Write));
        // n log n ballpark, not quadratic.
        assert!(acc.len() > 10 * 1024 && acc.len() < 60 * 1024, "{}", acc.len());
    }

    #[test]
    fn deterministic_for_a_seed() {
        let a = quicksort_accesses(300, &mut ChaCha8Rng::seed_from_u64(4));
        let b = quicksort_accesses(300, &mut ChaCha8Rng::seed_from_u64(4));
        assert_eq!(a, b);
    }
}
