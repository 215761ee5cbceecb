//! Seed derivation for deterministic sub-streams.
//!
//! Everything stochastic in the crate is keyed by a single `u64` seed plus a
//! handful of integer tags (epoch number, sample index, view index, class id).
//! [`derive_seed`] mixes the tags into the base seed with SplitMix64 so that
//! distinct tag paths yield statistically independent streams while staying
//! reproducible across platforms and runs.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One round of the SplitMix64 output function.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from `base` and an ordered list of stream tags.
///
/// The same `(base, tags)` always produces the same child; different tag
/// sequences produce unrelated children.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    let mut state = splitmix64(base);
    for &t in tags {
        state = splitmix64(state ^ t.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    }
    state
}

/// Construct a [`ChaCha8Rng`] seeded by [`derive_seed`]`(base, tags)`.
pub fn rng_from(base: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, tags))
}
