//! Seeded randomness.
//!
//! All stochastic code in this crate takes explicit `u64` seeds and runs on
//! ChaCha8, so results are reproducible across platforms and rerun-stable.
//! Parallel sampling assigns every sampled item its own counter-derived
//! stream, which makes results independent of thread scheduling.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The RNG used throughout the crate.
pub type Rng = ChaCha8Rng;

/// Builds the RNG for a given seed.
pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Builds an independent RNG stream for item `index` under a base seed.
///
/// Every index gets a distinct ChaCha stream, so a batch of draws can be
/// produced in any order (or in parallel) with identical results.
pub fn stream_rng(seed: u64, index: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Derives a child seed for a named stage.
///
/// Mixing is splitmix64 over the parent seed and a label hash; labels are
/// short static strings such as `"train-ar"` or `"distill"`.
pub fn child_seed(seed: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(seed ^ h)
}

/// Derives a child seed for a numbered substage (epoch, batch, worker...).
pub fn child_seed_indexed(seed: u64, label: &str, index: u64) -> u64 {
    splitmix64(child_seed(seed, label) ^ splitmix64(index))
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}
