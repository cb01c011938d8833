//! Counter-based random stream derivation.
//!
//! Every consumer of randomness (a path sample at a given interval, a network
//! initialization, an evaluation batch) derives its own ChaCha stream from
//! the master seed and a tag list identifying the consumer. Results therefore
//! do not depend on scheduling or worker count, and any sub-stream can be
//! re-derived in isolation.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream purposes, used as the leading tag of every derivation.
pub mod purpose {
    pub const PATHS: u64 = 0x50415448; // training/simulation paths
    pub const INIT: u64 = 0x494e4954; // network initialization
    pub const EVAL: u64 = 0x4556414c; // evaluation batches
    pub const RUN: u64 = 0x52554e53; // per-run master seeds
    pub const ORACLE: u64 = 0x4f52434c; // Monte-Carlo oracle sampling
}

#[inline]
fn splitmix64(state: &mut u64) {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    *state ^= z ^ (z >> 31);
}

/// Mix a master seed with a tag list into a single 64-bit key.
pub fn derive_key(master: u64, tags: &[u64]) -> u64 {
    let mut state = master ^ 0x6a09_e667_f3bc_c908;
    for &tag in tags {
        state ^= tag.wrapping_mul(0xff51_afd7_ed55_8ccd);
        splitmix64(&mut state);
        splitmix64(&mut state);
    }
    splitmix64(&mut state);
    state
}

/// Derive an independent ChaCha stream for the given consumer.
pub fn derive_stream(master: u64, tags: &[u64]) -> ChaCha8Rng {
    let key = derive_key(master, tags);
    let mut seed = [0u8; 32];
    let mut state = key;
    for chunk in seed.chunks_mut(8) {
        splitmix64(&mut state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}
