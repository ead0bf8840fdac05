//! Seed plumbing. Every random draw in the crate comes from a ChaCha8 stream
//! keyed by a 64-bit seed and a purpose-specific stream id, so results do not
//! depend on platform, thread scheduling or call order across components.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stream ids for the independent random sources of one run.
pub mod streams {
    pub const WORLD: u64 = 1;
    pub const OBSERVATION: u64 = 2;
    pub const AGENT_INIT: u64 = 3;
    pub const GAME: u64 = 4;
    pub const GW_INIT: u64 = 5;
    pub const TRANSFORM: u64 = 6;
}

pub fn rng_for(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// SplitMix64 finalizer, used to derive child seeds (per agent, per restart).
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
