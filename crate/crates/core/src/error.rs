//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by game construction, payment evaluation and simulation.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller supplied a value outside its documented domain.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A profile (supertypes, strategies, bids) has the wrong length.
    #[error("profile length {got} does not match the expected {expected}")]
    ProfileMismatch { expected: usize, got: usize },

    /// Exact enumeration over the type grid was refused.
    #[error("type grid of {cells} cells exceeds the exact-enumeration limit of {limit}")]
    GridTooLarge { cells: u128, limit: u64 },

    /// A strategy emitted a bid outside the type space; aborts the run.
    #[error("player {player} bid type index {bid} outside the {n_types}-type space on day {day}")]
    InvalidBid {
        player: usize,
        day: u64,
        bid: usize,
        n_types: usize,
    },

    /// A configuration document failed validation.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
