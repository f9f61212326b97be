//! Seeded randomness.
//!
//! Every random draw in the crate comes from [`SeedRng`], which is ChaCha8
//! (`rand_chacha::ChaCha8Rng`) keyed through `SeedableRng::seed_from_u64`.
//! Sub-streams (selection rounds, test splits) use [`derive_seed`]:
//! `base ^ mix64(stream)` where `mix64` is the SplitMix64 output finalizer.
//! `mix64(0) == 0`, so stream 0 is the base seed itself.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type SeedRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeedRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(base: u64, stream: u64) -> u64 {
    base ^ mix64(stream)
}

/// First `k` entries of a seeded Fisher-Yates shuffle of `items`.
///
/// Step `i` swaps position `i` with a uniform position in `i..len`.
pub fn shuffle_prefix<T>(items: &mut [T], k: usize, rng: &mut SeedRng) {
    let len = items.len();
    for i in 0..k.min(len) {
        let j = rng.random_range(i..len);
        items.swap(i, j);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stream_zero_is_identity() {
        assert_eq!(derive_seed(12345, 0), 12345);
        assert_ne!(derive_seed(12345, 1), 12345);
        assert_ne!(derive_seed(12345, 1), derive_seed(12345, 2));
    }

    #[test]
    fn prefix_is_a_permutation_prefix() {
        let mut v: Vec<usize> = (0..10).collect();
        shuffle_prefix(&mut v, 10, &mut seeded(3));
        let mut sorted = v.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..10).collect::<Vec<_>>());
    }
}
