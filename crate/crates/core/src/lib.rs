//! Simulation and verification toolkit for repeated two-stage stochastic
//! market mechanisms.
//!
//! The crate models markets where participants first bid a probability
//! distribution over their private valuation parameter and then, day after
//! day, bid its realization. It computes welfare-optimal decision rules by
//! exact enumeration, implements a two-part payment rule (a first-stage VCG
//! charge plus a realized-minus-expected transfer guarded by concentration
//! windows and superlinear fines), simulates repeated play under a library of
//! truthful and deviating strategies, and instantiates a demand-response
//! market with a posted-price baseline for comparison.
//!
//! Modules:
//! - [`game`]: type spaces, supertypes, finite games, optimal rules.
//! - [`mechanism`]: payment rule, discrepancy statistics, penalty schedules.
//! - [`strategies`]: truthful and deviating strategies, marginal matching.
//! - [`engine`]: seeded day-by-day simulation, ledgers, estimators, audits.
//! - [`dr`]: the demand-response market and the posted-price baseline.
//! - [`acceptance`]: the end-to-end verification suite.

pub mod acceptance;
pub mod dr;
pub mod engine;
pub mod error;
pub mod game;
pub mod mechanism;
pub mod strategies;
pub mod stream;

pub use error::{Error, Result};

/// FNV-1a seed; digests are stable across runs and platforms.
pub(crate) fn fnv1a_init() -> u64 {
    0xcbf29ce484222325
}

pub(crate) fn fnv1a_write(state: &mut u64, bytes: &[u8]) {
    for &b in bytes {
        *state ^= b as u64;
        *state = state.wrapping_mul(0x100000001b3);
    }
}
