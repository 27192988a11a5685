//! Deterministic seed derivation.
//!
//! Every random stream in a run is a ChaCha8 generator seeded from the run
//! seed plus a purpose tag, so independent components (init, shuffling,
//! noise, search trials) never share or race on a stream.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Mixes a base seed, a purpose tag, and an index into a new seed.
pub fn derive_seed(base: u64, tag: &str, index: u64) -> u64 {
    let mut h = base ^ 0x9e37_79b9_7f4a_7c15;
    for byte in tag.bytes() {
        h ^= byte as u64;
        h = h.wrapping_mul(0x100_0000_01b3);
    }
    h ^= index.wrapping_mul(0xff51_afd7_ed55_8ccd);
    splitmix64(h)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rng_for(base: u64, tag: &str, index: u64) -> ChaCha8Rng {
    rng_from(derive_seed(base, tag, index))
}
