//! Seeded random streams.
//!
//! Every consumer draws from its own ChaCha20 stream keyed by a master seed
//! and a purpose tag, so adding draws to one stream never perturbs another.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub type Stream = ChaCha20Rng;

/// Identity string written into every artifact's metadata.
pub const PRNG_ID: &str = "ChaCha20 (rand_chacha 0.9); 256-bit key = splitmix64 chain from master_seed ^ fnv1a64(tag)";

fn fnv1a64(tag: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent stream for `(master_seed, tag)`.
pub fn stream(master_seed: u64, tag: &str) -> Stream {
    let mut state = master_seed ^ fnv1a64(tag);
    let mut key = [0u8; 32];
    for chunk in key.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha20Rng::from_seed(key)
}

/// Derive a child seed, e.g. one per repeat of a scenario.
pub fn derive_seed(master_seed: u64, tag: &str, index: u64) -> u64 {
    let mut state = master_seed ^ fnv1a64(tag) ^ index.wrapping_mul(0xd6e8_feb8_6659_fd93);
    splitmix64(&mut state)
}
