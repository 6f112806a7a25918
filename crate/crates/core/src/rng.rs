//! Seed plumbing. Every run draws from ChaCha8 streams keyed by a single
//! `u64`, so results are reproducible across platforms and thread counts.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

const TOPOLOGY_STREAM: u64 = 0;
const DYNAMICS_STREAM: u64 = 1;

/// Mixes `index` into `base` (splitmix64 finalizer) to obtain an unrelated seed.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream used to rewire the backbone of a run.
pub fn topology_rng(seed: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(TOPOLOGY_STREAM);
    rng
}

/// Stream used for user motion, packet generation and routing choices.
pub fn dynamics_rng(seed: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(DYNAMICS_STREAM);
    rng
}
