//! Seeded substreams for reproducible, decoupled randomness.
//!
//! Every consumer of randomness owns a dedicated ChaCha stream addressed by
//! `(seed, domain, index)`. Changing what one player does can therefore never
//! perturb another player's draws, which is what makes paired comparisons
//! (common random numbers) exact rather than approximate.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Per-player true-type draws.
pub const TYPE_DRAWS: u64 = 1;
/// Per-player strategy randomness.
pub const STRATEGY: u64 = 2;
/// Exogenous per-day state (reserve cost draws, demand).
pub const SHOCK: u64 = 3;
/// Monte Carlo expectation fallbacks.
pub const MONTE_CARLO: u64 = 4;
/// Experiment sweeps.
pub const SWEEP: u64 = 5;

/// A ChaCha8 stream for `(seed, domain, index)`.
pub fn substream(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((domain << 48) ^ index);
    rng
}
