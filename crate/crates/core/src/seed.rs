//! Seed derivation.
//!
//! Every random stream in the crate is a ChaCha8 generator
//! ([`rand_chacha::ChaCha8Rng`]) seeded with
//! `derive_seed(master, &[tag, …])`. The derivation folds each tag into the
//! state with the SplitMix64 finalizer, so streams for (replication, group,
//! subject) or (test, permutation) are fixed up front and never depend on
//! the order in which workers consume them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable 64-bit mix of a master seed and a path of tags.
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    let mut state = splitmix64(master.wrapping_add(GOLDEN));
    for (i, &t) in tags.iter().enumerate() {
        let salt = GOLDEN.wrapping_mul(i as u64 + 2);
        state = splitmix64(state ^ splitmix64(t.wrapping_add(salt)));
    }
    state
}

/// A ChaCha8 stream for `derive_seed(master, tags)`.
pub fn stream(master: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, tags))
}
