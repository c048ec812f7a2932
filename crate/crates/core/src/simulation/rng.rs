//! Per-replicate random streams.
//!
//! The ChaCha8 key is four consecutive SplitMix64 outputs started at the
//! batch seed; replicate `i` reads ChaCha stream `i` under that key. Streams
//! never overlap, and a replicate's draws do not depend on how many other
//! replicates run or in which order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer (Steele, Lea and Flood 2014).
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// 256-bit ChaCha key expanded from a 64-bit seed.
pub fn expand_seed(seed: u64) -> [u8; 32] {
    let mut key = [0u8; 32];
    let mut state = seed;
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(state).to_le_bytes());
        state = state.wrapping_add(GOLDEN_GAMMA);
    }
    key
}

/// Generator for replicate `index` of the batch seeded with `seed`.
pub fn substream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::from_seed(expand_seed(seed));
    rng.set_stream(index);
    rng
}
