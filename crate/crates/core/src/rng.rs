//! Deterministic RNG stream derivation.
//!
//! Every stochastic stage of the pipeline draws from its own ChaCha stream
//! keyed by (seed, stage tag), so changing one stage (or the scenario) never
//! perturbs the draws of another.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mix a seed with a textual stage tag into a single 64-bit key.
pub fn derive_seed(seed: u64, tag: &str) -> u64 {
    // FNV-1a over the tag bytes, then splitmix to decorrelate nearby seeds.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in tag.as_bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut state = seed ^ h;
    splitmix64(&mut state)
}

/// Seed for replicate `r` of a simulation run.
pub fn replicate_seed(seed: u64, replicate: u64) -> u64 {
    let mut state = seed ^ replicate.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    let a = splitmix64(&mut state);
    splitmix64(&mut state) ^ a.rotate_left(17)
}

/// A ChaCha stream for one (seed, stage) pair.
pub fn stage_rng(seed: u64, tag: &str) -> ChaCha12Rng {
    let mut state = derive_seed(seed, tag);
    let mut key = [0u8; 32];
    for chunk in key.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha12Rng::from_seed(key)
}
