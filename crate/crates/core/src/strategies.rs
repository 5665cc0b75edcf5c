//! Strategy library: truthful play plus a bench of deviating strategies.
//!
//! A strategy maps a private supertype to a first-stage bid, and each day maps
//! the player's own observable history plus its realized type to a type bid.
//! Policies see exactly what a player would: its own past types and bids and
//! the public outcome sequence, never other players' types or raw bids.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::Supertype;

/// What a policy may condition on when bidding on day `day`. Outcomes appear
/// as stable numeric codes; everything else is the player's own data.
#[derive(Debug, Clone, Copy)]
pub struct HistoryView<'a> {
    /// Current day `l`, 1-based. The slices below cover days `1..l`.
    pub day: u64,
    /// Concentration window `r(l)` announced by the mechanism for today.
    pub window: f64,
    /// Code of the committed first-stage outcome.
    pub o1_code: u64,
    /// This player's past realized types.
    pub own_true_types: &'a [usize],
    /// This player's past bids.
    pub own_bids: &'a [usize],
    /// Codes of past second-stage outcomes.
    pub outcome_codes: &'a [u64],
    /// Running count of this player's past bids per type.
    pub own_bid_counts: &'a [u64],
}

/// A first-stage supertype map plus a second-stage bidding policy. Variants
/// serialize with a tagged `kind` field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Strategy {
    /// Bid the true supertype and the true type every day.
    Truthful,
    /// Report a fixed supertype regardless of the truth; bid types truthfully.
    SupertypeMisreport { reported: Supertype },
    /// Report a fixed supertype and draw each day's bid from a kernel row
    /// selected by the true type, independently across days.
    #[serde(rename = "stationary")]
    StationaryKernel {
        kernel: Vec<Supertype>,
        reported: Supertype,
    },
    /// Report truthfully, but bias bids toward a deterministic function of
    /// yesterday's outcome code while steering the long-run bid marginal back
    /// to the report whenever it drifts past half the window.
    CorrelatedMimic { target: usize, bias: f64 },
    /// Bid a fixed type index every day; the index is only checked against
    /// the type space when the bid is emitted.
    ConstantBid { bid: usize },
}

impl Strategy {
    pub fn truthful() -> Self {
        Strategy::Truthful
    }

    pub fn supertype_misreport(reported: Supertype) -> Self {
        Strategy::SupertypeMisreport { reported }
    }

    pub fn stationary_type_misreport(kernel: Vec<Supertype>, reported: Supertype) -> Self {
        Strategy::StationaryKernel { kernel, reported }
    }

    pub fn correlated_mimic(target: usize, bias: f64) -> Self {
        Strategy::CorrelatedMimic { target, bias }
    }

    pub fn constant_bid(bid: usize) -> Self {
        Strategy::ConstantBid { bid }
    }

    /// Structural checks against the game this strategy will play in.
    /// Deliberately does not range-check `ConstantBid`: out-of-space bids
    /// surface as run-time invalid-bid errors naming the player and day.
    pub fn validate(&self, n_types: usize, self_index: usize, n_players: usize) -> Result<()> {
        match self {
            Strategy::Truthful | Strategy::ConstantBid { .. } => Ok(()),
            Strategy::SupertypeMisreport { reported } => {
                if reported.len() != n_types {
                    return Err(Error::Config(format!(
                        "player {self_index}: reported supertype covers {} types, space has {n_types}",
                        reported.len()
                    )));
                }
                Ok(())
            }
            Strategy::StationaryKernel { kernel, reported } => {
                if kernel.len() != n_types || reported.len() != n_types {
                    return Err(Error::Config(format!(
                        "player {self_index}: kernel must have one row per type"
                    )));
                }
                if kernel.iter().any(|row| row.len() != n_types) {
                    return Err(Error::Config(format!(
                        "player {self_index}: kernel rows must span the type space"
                    )));
                }
                Ok(())
            }
            Strategy::CorrelatedMimic { target, bias } => {
                if *target == self_index || *target >= n_players {
                    return Err(Error::Config(format!(
                        "player {self_index}: mimic target {target} must be another player"
                    )));
                }
                if !(0.0..=1.0).contains(bias) {
                    return Err(Error::Config(format!(
                        "player {self_index}: mimic bias {bias} outside [0, 1]"
                    )));
                }
                Ok(())
            }
        }
    }

    /// First-stage bid as a function of the true supertype.
    pub fn first_stage(&self, theta: &Supertype) -> Supertype {
        match self {
            Strategy::Truthful
            | Strategy::CorrelatedMimic { .. }
            | Strategy::ConstantBid { .. } => theta.clone(),
            Strategy::SupertypeMisreport { reported }
            | Strategy::StationaryKernel { reported, .. } => reported.clone(),
        }
    }

    /// Second-stage bid for one day. Deterministic given the view, the true
    /// type, and the state of `rng`.
    pub fn second_stage_bid(
        &self,
        view: &HistoryView<'_>,
        true_type: usize,
        reported: &Supertype,
        rng: &mut ChaCha8Rng,
    ) -> usize {
        match self {
            Strategy::Truthful | Strategy::SupertypeMisreport { .. } => true_type,
            Strategy::ConstantBid { bid } => *bid,
            Strategy::StationaryKernel { kernel, .. } => {
                let u: f64 = rng.random();
                kernel[true_type].quantile(u)
            }
            Strategy::CorrelatedMimic { target, bias } => {
                if view.own_bids.is_empty() {
                    return true_type;
                }
                let n_types = reported.len();
                let past = view.own_bids.len() as f64;
                // steer back toward the reported marginal before the window
                // can close on us
                let mut worst = 0.0_f64;
                let mut most_under = 0usize;
                let mut under_gap = f64::NEG_INFINITY;
                for t in 0..n_types {
                    let dev = view.own_bid_counts[t] as f64 / past - reported.prob(t);
                    worst = worst.max(dev.abs());
                    if -dev > under_gap {
                        under_gap = -dev;
                        most_under = t;
                    }
                }
                if worst > view.window / 2.0 {
                    return most_under;
                }
                let prev = *view.outcome_codes.last().expect("nonempty history");
                let preferred = ((prev).wrapping_add(*target as u64) % n_types as u64) as usize;
                let u: f64 = rng.random();
                if u < *bias {
                    preferred
                } else {
                    true_type
                }
            }
        }
    }

    /// Whether the strategy is built to keep its long-run bid marginal equal
    /// to its reported supertype. `None` when no closed-form kernel exists
    /// and the answer depends on play (never the case for this library).
    pub fn designed_marginal_matching(&self, theta: &Supertype, tol: f64) -> bool {
        match self {
            Strategy::Truthful => true,
            // the mimic rebalances its own marginal onto the (truthful) report
            Strategy::CorrelatedMimic { .. } => true,
            Strategy::SupertypeMisreport { reported } => {
                let identity: Vec<Supertype> = (0..theta.len())
                    .map(|t| Supertype::point_mass(theta.len(), t))
                    .collect();
                marginal_match_check(&identity, theta, reported, tol)
            }
            Strategy::StationaryKernel { kernel, reported } => {
                marginal_match_check(kernel, theta, reported, tol)
            }
            Strategy::ConstantBid { bid } => {
                let n = theta.len();
                if *bid >= n {
                    return false;
                }
                let point = Supertype::point_mass(n, *bid);
                let kernel: Vec<Supertype> = (0..n).map(|_| point.clone()).collect();
                marginal_match_check(&kernel, theta, theta, tol)
            }
        }
    }
}

/// Whether a stationary bidding kernel pushes the true supertype onto the
/// reported one: for every type `t`, `Σ_s θ(s)·kernel[s](t)` must match
/// `θ̂(t)` within `tol`. Stationary deviations violating this accumulate
/// marginal discrepancies and unbounded penalties.
pub fn marginal_match_check(
    kernel: &[Supertype],
    true_supertype: &Supertype,
    reported: &Supertype,
    tol: f64,
) -> bool {
    let n = true_supertype.len();
    for t in 0..n {
        let induced: f64 = (0..n)
            .map(|s| true_supertype.prob(s) * kernel[s].prob(t))
            .sum();
        if (induced - reported.prob(t)).abs() > tol {
            return false;
        }
    }
    true
}

/// Kernel that swaps the two types of a binary space; marginal-matching for
/// uniform supertypes.
pub fn flip_kernel() -> Vec<Supertype> {
    vec![Supertype::point_mass(2, 1), Supertype::point_mass(2, 0)]
}

/// Kernel that maps every type to a constant bid; never marginal-matching
/// unless the report is that point mass.
pub fn constant_kernel(n_types: usize, bid: usize) -> Vec<Supertype> {
    (0..n_types)
        .map(|_| Supertype::point_mass(n_types, bid))
        .collect()
}

/// Identity kernel: bid what you drew.
pub fn identity_kernel(n_types: usize) -> Vec<Supertype> {
    (0..n_types)
        .map(|t| Supertype::point_mass(n_types, t))
        .collect()
}
