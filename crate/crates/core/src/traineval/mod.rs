//! placeholder
use rand_chacha::rand_core::SeedableRng;

/// Deterministic RNG used everywhere a seed appears.
pub type SeededRng = rand_chacha::ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    SeededRng::seed_from_u64(seed)
}
