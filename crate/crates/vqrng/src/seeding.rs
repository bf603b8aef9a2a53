//! Counter-based substream derivation: every random quantity in the crate is
//! keyed by (global seed, purpose tag, stream index), so chunks and stages can
//! be generated in any order, on any number of threads, with identical output.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// splitmix64 step; a standard 64-bit mixer.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Derive a deterministic ChaCha12 stream from `(seed, purpose, index)`.
pub fn substream(seed: u64, purpose: u64, index: u64) -> ChaCha12Rng {
    let mut state = seed ^ purpose.rotate_left(17) ^ index.rotate_left(41);
    // Feed each key component through the mixer so similar tuples diverge.
    let mut s = [0u8; 32];
    let mut acc = state;
    acc ^= splitmix64(&mut state).wrapping_add(purpose);
    acc ^= splitmix64(&mut state).wrapping_add(index);
    let mut st2 = acc;
    for chunk in s.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut st2).to_le_bytes());
    }
    ChaCha12Rng::from_seed(s)
}

/// Stage tags used by the pipeline and modules. Fixed values keep artifacts
/// reproducible across releases.
pub mod purpose {
    pub const ELECTRONIC: u64 = 0x01;
    pub const QUANTUM: u64 = 0x02;
    pub const TOEPLITZ_SEED: u64 = 0x10;
}
