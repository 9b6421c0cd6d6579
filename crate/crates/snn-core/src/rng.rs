//! Seed derivation for reproducible sub-streams.
//!
//! Every random decision in the crate (weight init, shuffling, segment
//! starts, dropout masks, timestamp permutations) draws from a ChaCha stream
//! seeded through [`derive_seed`], so any piece of a run can be reproduced in
//! isolation from the base seed and a handful of integer tags.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags. Keeping them in one place guarantees two different purposes
/// can never collide on the same derived seed.
pub mod stream {
    pub const INIT: u64 = 1;
    pub const SHUFFLE: u64 = 2;
    pub const SEGMENT: u64 = 3;
    pub const DROPOUT: u64 = 4;
    pub const CONFUSE: u64 = 5;
    pub const SYNTH_GEOMETRY: u64 = 6;
    pub const SYNTH_SPLIT: u64 = 7;
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Mixes `base` with each tag in order. Order-sensitive: `[a, b]` and
/// `[b, a]` derive different seeds.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    let mut s = splitmix(base);
    for &t in tags {
        s = splitmix(s ^ t.wrapping_mul(0xd6e8_feb8_6659_fd93));
    }
    s
}

/// ChaCha stream for the given base seed and tag path. ChaCha8 is portable:
/// the same seed yields the same sequence on every platform.
pub fn rng_from(base: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, tags))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivation_is_order_sensitive() {
        assert_ne!(derive_seed(7, &[1, 2]), derive_seed(7, &[2, 1]));
    }

    #[test]
    fn distinct_tags_give_distinct_seeds() {
        let s: Vec<u64> = (0..100).map(|i| derive_seed(42, &[stream::SEGMENT, i])).collect();
        let mut dedup = s.clone();
        dedup.sort_unstable();
        dedup.dedup();
        assert_eq!(dedup.len(), s.len());
    }

    #[test]
    fn same_path_reproduces() {
        use rand_chacha::rand_core::RngCore;
        let mut a = rng_from(9, &[stream::INIT, 3]);
        let mut b = rng_from(9, &[stream::INIT, 3]);
        assert_eq!(a.next_u64(), b.next_u64());
    }
}
