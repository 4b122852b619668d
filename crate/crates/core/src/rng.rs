//! Seeded RNG streams. Every random decision in the crate draws from a
//! ChaCha stream derived from `(seed, stream id)` so results are
//! reproducible across platforms and independent of call order elsewhere.

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng;

/// Derive an independent stream for `(seed, stream)`.
pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream ids used across the crate.
pub mod streams {
    pub const MODEL_INIT: u64 = 1;
    pub const EPOCH_ORDER: u64 = 2;
    pub const SPLIT_RANDOM: u64 = 3;
    pub const EXEMPLARS: u64 = 4;
    pub const SCENE_LAYOUT: u64 = 5;
    /// Scene `i` of a generated dataset uses stream `SCENE_BASE + i`.
    pub const SCENE_BASE: u64 = 1 << 32;
}
