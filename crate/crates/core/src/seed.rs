//! Counter-derived seeding.
//!
//! Every stochastic component takes one explicit master seed and derives
//! per-unit seeds (per tree, per trial, per case, per combo) by counter, so
//! results are independent of execution order and would stay identical under
//! parallel evaluation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Derive a child seed from a master seed and a counter (splitmix64 finalizer).
pub fn derive_seed(master: u64, counter: u64) -> u64 {
    let mut z = master ^ counter.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Portable RNG for the derived seed.
pub fn seeded_rng(master: u64, counter: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, counter))
}
