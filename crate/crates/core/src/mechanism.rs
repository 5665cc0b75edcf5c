//! The two-part payment rule.
//!
//! Each day a player owes a first-stage VCG charge plus a second-stage
//! transfer of its realized-at-bid valuation minus the expected valuation
//! implied by its supertype bid. A penalty rides on top whenever the player's
//! empirical bid statistics drift outside a shrinking concentration window:
//! per-type bid frequencies are checked against the reported supertype, and
//! joint bid frequencies are checked against the product of the reported
//! marginal and the observed frequency of everyone else's bids. The window
//! shrinks slightly slower than `1/√l`, so truthful bidding violates it only
//! finitely often while any persistent distortion is caught and fined at a
//! superlinear rate.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{Estimate, Game, Supertype};

// ---------------------------------------------------------------------------
// Parameters and schedules
// ---------------------------------------------------------------------------

/// Window exponent, penalty growth and horizon of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MechanismParamsJson")]
pub struct MechanismParams {
    /// Window exponent γ > 0; larger values widen the window.
    pub gamma: f64,
    /// Penalty grows as `l^penalty_exponent`; must exceed 1 so that the
    /// average fine from persistent violations diverges.
    pub penalty_exponent: f64,
    /// Number of days simulated.
    pub horizon: u64,
}

#[derive(Deserialize)]
struct MechanismParamsJson {
    gamma: f64,
    penalty_exponent: f64,
    horizon: u64,
}

impl TryFrom<MechanismParamsJson> for MechanismParams {
    type Error = Error;
    fn try_from(j: MechanismParamsJson) -> Result<Self> {
        MechanismParams::new(j.gamma, j.penalty_exponent, j.horizon)
    }
}

impl MechanismParams {
    pub fn new(gamma: f64, penalty_exponent: f64, horizon: u64) -> Result<Self> {
        if !gamma.is_finite() || gamma <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "window exponent must be positive, got {gamma}"
            )));
        }
        if !penalty_exponent.is_finite() || penalty_exponent <= 1.0 {
            return Err(Error::InvalidInput(format!(
                "penalty exponent must exceed 1, got {penalty_exponent}"
            )));
        }
        if horizon == 0 {
            return Err(Error::InvalidInput("horizon must be at least 1".into()));
        }
        Ok(Self {
            gamma,
            penalty_exponent,
            horizon,
        })
    }

    /// γ = 1, quadratic penalties.
    pub fn standard(horizon: u64) -> Self {
        Self::new(1.0, 2.0, horizon).unwrap()
    }
}

/// Concentration window `r(l) = √(ln(2·l^(1+γ)) / (2l))`: the smallest
/// schedule that both shrinks to zero and keeps truthful play inside the
/// window for all but finitely many days.
pub fn window_r(l: u64, gamma: f64) -> f64 {
    let lf = l as f64;
    ((2.0 * lf.powf(1.0 + gamma)).ln() / (2.0 * lf)).sqrt()
}

/// Penalty charged on a violation day: `l^penalty_exponent`.
pub fn penalty_charge(l: u64, params: &MechanismParams) -> f64 {
    (l as f64).powf(params.penalty_exponent)
}

// ---------------------------------------------------------------------------
// Discrepancy statistics
// ---------------------------------------------------------------------------

/// Per-player joint counts for one opposing bid profile.
#[derive(Debug, Clone, PartialEq, Eq)]
struct GroupCounts {
    /// Days on which this opposing profile was bid.
    seen: u64,
    /// Joint days split by this player's own bid.
    joint: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct PlayerCounts {
    /// Days on which this player bid each type.
    type_counts: Vec<u64>,
    /// Keyed by the other players' bid profile, in player order with this
    /// player removed. A BTreeMap keeps iteration deterministic.
    groups: BTreeMap<Vec<usize>, GroupCounts>,
}

/// Running bid-frequency counts for every player, updated once per day.
/// Only observed opposing profiles are stored; for an unobserved profile both
/// the joint and the marginal counts are zero, so its correlation statistic
/// is exactly zero and never trips the window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiscrepancyStats {
    n_players: usize,
    n_types: usize,
    day: u64,
    players: Vec<PlayerCounts>,
}

impl DiscrepancyStats {
    pub fn new(n_players: usize, n_types: usize) -> Self {
        Self {
            n_players,
            n_types,
            day: 0,
            players: (0..n_players)
                .map(|_| PlayerCounts {
                    type_counts: vec![0; n_types],
                    groups: BTreeMap::new(),
                })
                .collect(),
        }
    }

    pub fn day(&self) -> u64 {
        self.day
    }

    pub fn n_players(&self) -> usize {
        self.n_players
    }

    pub fn n_types(&self) -> usize {
        self.n_types
    }

    fn others_key(profile: &[usize], player: usize) -> Vec<usize> {
        profile
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != player)
            .map(|(_, &t)| t)
            .collect()
    }

    /// Folds one day of bids into every player's counts.
    pub fn update(&mut self, bids: &[usize]) -> Result<()> {
        if bids.len() != self.n_players {
            return Err(Error::ProfileMismatch {
                expected: self.n_players,
                got: bids.len(),
            });
        }
        for (player, &b) in bids.iter().enumerate() {
            if b >= self.n_types {
                return Err(Error::InvalidBid {
                    player,
                    day: self.day + 1,
                    bid: b,
                    n_types: self.n_types,
                });
            }
        }
        self.day += 1;
        for i in 0..self.n_players {
            let key = Self::others_key(bids, i);
            let pc = &mut self.players[i];
            pc.type_counts[bids[i]] += 1;
            let group = pc.groups.entry(key).or_insert_with(|| GroupCounts {
                seen: 0,
                joint: vec![0; self.n_types],
            });
            group.seen += 1;
            group.joint[bids[i]] += 1;
        }
        Ok(())
    }

    pub fn type_count(&self, player: usize, t: usize) -> u64 {
        self.players[player].type_counts[t]
    }

    /// Days on which the other players bid `others` (profile with `player`
    /// removed).
    pub fn others_count(&self, player: usize, others: &[usize]) -> u64 {
        self.players[player]
            .groups
            .get(others)
            .map_or(0, |g| g.seen)
    }

    pub fn joint_count(&self, player: usize, own: usize, others: &[usize]) -> u64 {
        self.players[player]
            .groups
            .get(others)
            .map_or(0, |g| g.joint[own])
    }

    /// Marginal discrepancy: empirical frequency of bidding `t` minus the
    /// reported probability.
    pub fn discrepancy_f(&self, player: usize, t: usize, reported: &Supertype) -> f64 {
        let l = self.day as f64;
        self.players[player].type_counts[t] as f64 / l - reported.prob(t)
    }

    /// Correlation discrepancy for a full bid profile `d`: the empirical
    /// joint frequency of `(d_i, d_{-i})` minus the reported marginal times
    /// the empirical frequency of `d_{-i}`.
    pub fn correlation_h(&self, player: usize, profile: &[usize], reported: &Supertype) -> f64 {
        let l = self.day as f64;
        let key = Self::others_key(profile, player);
        let own = profile[player];
        match self.players[player].groups.get(&key) {
            Some(g) => g.joint[own] as f64 / l - reported.prob(own) * (g.seen as f64 / l),
            None => 0.0,
        }
    }

    /// True when some marginal or correlation discrepancy falls outside the
    /// concentration window on the current day.
    ///
    /// Works on unscaled counts against `l · r(l)` so the decision is the
    /// same float computation wherever it is evaluated (in-run or replayed
    /// from a bid log).
    pub fn penalty_event(&self, player: usize, reported: &Supertype, params: &MechanismParams) -> bool {
        debug_assert!(self.day >= 1, "penalty events are defined from day 1");
        let l = self.day as f64;
        let threshold = l * window_r(self.day, params.gamma);
        let pc = &self.players[player];
        for (t, &cnt) in pc.type_counts.iter().enumerate() {
            if (cnt as f64 - l * reported.prob(t)).abs() >= threshold {
                return true;
            }
        }
        // Unobserved opposing profiles contribute an exact zero, so scanning
        // the observed groups crossed with every own type is lossless.
        for g in pc.groups.values() {
            let seen = g.seen as f64;
            for (t, &joint) in g.joint.iter().enumerate() {
                if (joint as f64 - reported.prob(t) * seen).abs() >= threshold {
                    return true;
                }
            }
        }
        false
    }
}

// ---------------------------------------------------------------------------
// Payments
// ---------------------------------------------------------------------------

/// One player's payment on one day, split into its components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PaymentBreakdown {
    pub first_stage: f64,
    pub second_stage_base: f64,
    pub penalty: f64,
    pub total: f64,
}

impl PaymentBreakdown {
    pub fn assemble(first_stage: f64, second_stage_base: f64, penalty: f64) -> Self {
        Self {
            first_stage,
            second_stage_base,
            penalty,
            total: first_stage + second_stage_base + penalty,
        }
    }
}

/// First-stage VCG charge: the optimal welfare the others could reach without
/// player `i`, minus the welfare they actually expect alongside it.
pub fn first_stage_payment<G: Game>(game: &G, bids: &[Supertype], player: usize) -> Result<f64> {
    let mut included = vec![true; game.num_players()];
    included[player] = false;
    let without = game.optimal_welfare(bids, &included)?;
    let alongside = game.expected_others_welfare(bids, player)?;
    Ok(without.value - alongside.value)
}

/// Second-stage payment for one day: realized-at-bid valuation minus the
/// expected valuation under the bid law, plus the penalty when flagged.
#[allow(clippy::too_many_arguments)]
pub fn second_stage_payment<G: Game>(
    game: &G,
    bids: &[Supertype],
    day_bids: &[usize],
    player: usize,
    day: u64,
    penalty_flag: bool,
    params: &MechanismParams,
    shock: &G::Shock,
) -> Result<f64> {
    if day_bids.len() != game.num_players() {
        return Err(Error::ProfileMismatch {
            expected: game.num_players(),
            got: day_bids.len(),
        });
    }
    let o1 = game.optimal_first_stage(bids)?;
    let o2 = game.optimal_second_stage(&o1, day_bids, shock);
    let realized = game.valuation(player, day_bids[player], &o1, &o2);
    let expected = game.expected_valuation(bids, player)?.value;
    let penalty = if penalty_flag {
        penalty_charge(day, params)
    } else {
        0.0
    };
    Ok(realized - expected + penalty)
}

/// Expected valuation term of the second-stage rule; thin re-export of the
/// game's own enumeration for callers that only see this module.
pub fn expected_valuation<G: Game>(game: &G, bids: &[Supertype], player: usize) -> Result<Estimate> {
    game.expected_valuation(bids, player)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::fixtures::uniform_allocation_game;

    fn uniform2() -> Supertype {
        Supertype::uniform(2)
    }

    #[test]
    fn params_validation() {
        assert!(MechanismParams::new(0.0, 2.0, 10).is_err());
        assert!(MechanismParams::new(1.0, 1.0, 10).is_err());
        assert!(MechanismParams::new(1.0, 2.0, 0).is_err());
        assert!(MechanismParams::new(0.5, 1.5, 1).is_ok());
    }

    #[test]
    fn window_matches_independent_evaluation() {
        // frozen from a high-precision evaluation of √(ln(2·l^(1+γ))/(2l))
        assert!((window_r(1, 1.0) - 0.5887050112577373).abs() < 1e-15);
        assert!((window_r(100, 1.0) - 0.222525139619506).abs() < 1e-15);
        assert!((window_r(1_000_000, 1.0) - 0.003_763_254_462_329_68).abs() < 1e-15);
        // shrinks toward zero
        assert!(window_r(1_000_000, 1.0) < 0.004);
        assert!(window_r(100, 1.0) > window_r(10_000, 1.0));
    }

    #[test]
    fn penalty_charge_examples() {
        let p = MechanismParams::new(1.0, 2.0, 10).unwrap();
        assert_eq!(penalty_charge(10, &p), 100.0);
        assert_eq!(penalty_charge(1, &p), 1.0);
        assert_eq!(penalty_charge(1000, &p), 1_000_000.0);
        let p3 = MechanismParams::new(1.0, 3.0, 10).unwrap();
        assert_eq!(penalty_charge(1, &p3), 1.0);
    }

    #[test]
    fn update_counts_single_and_repeated_days() {
        let mut stats = DiscrepancyStats::new(2, 2);
        stats.update(&[0, 1]).unwrap();
        assert_eq!(stats.day(), 1);
        assert_eq!(stats.type_count(0, 0), 1);
        assert_eq!(stats.joint_count(0, 0, &[1]), 1);
        assert_eq!(stats.others_count(0, &[1]), 1);
        stats.update(&[0, 1]).unwrap();
        assert_eq!(stats.type_count(0, 0), 2);
        assert_eq!(stats.joint_count(0, 0, &[1]), 2);
        assert_eq!(stats.others_count(1, &[0]), 2);
    }

    #[test]
    fn update_rejects_out_of_space_bids() {
        let mut stats = DiscrepancyStats::new(2, 2);
        let err = stats.update(&[0, 2]).unwrap_err();
        match err {
            Error::InvalidBid { player, day, bid, .. } => {
                assert_eq!((player, day, bid), (1, 1, 2));
            }
            other => panic!("unexpected error {other:?}"),
        }
        // rejected day does not advance the clock
        assert_eq!(stats.day(), 0);
    }

    #[test]
    fn discrepancy_f_examples() {
        // bids a,a,b,a over 4 days with θ̂(a) = 0.5
        let mut stats = DiscrepancyStats::new(1, 2);
        for b in [0, 0, 1, 0] {
            stats.update(&[b]).unwrap();
        }
        assert_eq!(stats.discrepancy_f(0, 0, &uniform2()), 0.25);
        // all bids equal t with θ̂(t) = 1
        let mut stats = DiscrepancyStats::new(1, 2);
        for _ in 0..4 {
            stats.update(&[1]).unwrap();
        }
        let point = Supertype::point_mass(2, 1);
        assert_eq!(stats.discrepancy_f(0, 1, &point), 0.0);
        // type never bid, θ̂(t) = 0
        assert_eq!(stats.discrepancy_f(0, 0, &point), 0.0);
    }

    #[test]
    fn correlation_h_examples() {
        // days {(a,a), (b,a)}, θ̂₁(a) = 0.5, d = (a,a)
        let mut stats = DiscrepancyStats::new(2, 2);
        stats.update(&[0, 0]).unwrap();
        stats.update(&[1, 0]).unwrap();
        assert_eq!(stats.correlation_h(0, &[0, 0], &uniform2()), 0.0);
        // d₋ᵢ never observed
        assert_eq!(stats.correlation_h(0, &[0, 1], &uniform2()), 0.0);
        // days {(a,a), (a,a)}: joint 1.0 minus 0.5 · 1.0
        let mut stats = DiscrepancyStats::new(2, 2);
        stats.update(&[0, 0]).unwrap();
        stats.update(&[0, 0]).unwrap();
        assert_eq!(stats.correlation_h(0, &[0, 0], &uniform2()), 0.5);
    }

    #[test]
    fn marginal_sums_of_f_vanish() {
        let mut stats = DiscrepancyStats::new(2, 3);
        let bids = [[0, 2], [1, 1], [2, 0], [0, 0], [1, 2]];
        for b in bids {
            stats.update(&b).unwrap();
        }
        let theta = Supertype::new(vec![0.2, 0.3, 0.5]).unwrap();
        for i in 0..2 {
            let total: f64 = (0..3).map(|t| stats.discrepancy_f(i, t, &theta)).sum();
            assert!(total.abs() < 1e-12);
        }
    }

    #[test]
    fn penalty_event_day_one_truthful_is_quiet() {
        let mut stats = DiscrepancyStats::new(2, 2);
        stats.update(&[1, 0]).unwrap();
        let params = MechanismParams::standard(10);
        // |f̂| = 0.5 and |ĥ| = 0.5 both sit inside r(1) ≈ 0.5887
        assert!(!stats.penalty_event(0, &uniform2(), &params));
        assert!(!stats.penalty_event(1, &uniform2(), &params));
    }

    #[test]
    fn penalty_event_fires_on_persistent_drift() {
        // all 100 days bid type 0 against a uniform report: f̂₀ = 0.5 ≥ r(100)
        let mut stats = DiscrepancyStats::new(2, 2);
        for _ in 0..100 {
            stats.update(&[0, 0]).unwrap();
        }
        let params = MechanismParams::standard(100);
        assert!(window_r(100, 1.0) < 0.5);
        assert!(stats.penalty_event(0, &uniform2(), &params));
    }

    #[test]
    fn all_zero_discrepancies_never_fire() {
        // point-mass report matched by constant bids: every statistic is 0
        let mut stats = DiscrepancyStats::new(2, 2);
        for _ in 0..50 {
            stats.update(&[1, 1]).unwrap();
        }
        let point = Supertype::point_mass(2, 1);
        let params = MechanismParams::standard(50);
        assert!(!stats.penalty_event(0, &point, &params));
    }

    #[test]
    fn sparse_event_equals_dense_enumeration() {
        // dense oracle: recount every statistic from the raw log over all of
        // Δⁿ (up to 4096 profiles) and compare the event decision
        use rand::{Rng, SeedableRng};
        for (n, n_types) in [(3usize, 4usize), (4, 8)] {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7 + n as u64);
            let days = 120;
            let params = MechanismParams::standard(days);
            let reported: Vec<Supertype> = (0..n)
                .map(|_| {
                    let raw: Vec<f64> = (0..n_types).map(|_| rng.random::<f64>() + 0.05).collect();
                    let s: f64 = raw.iter().sum();
                    Supertype::new(raw.iter().map(|x| x / s).collect()).unwrap()
                })
                .collect();
            let mut log: Vec<Vec<usize>> = Vec::new();
            let mut stats = DiscrepancyStats::new(n, n_types);
            for day in 1..=days {
                let bids: Vec<usize> = (0..n).map(|_| rng.random_range(0..n_types)).collect();
                stats.update(&bids).unwrap();
                log.push(bids);
                if day % 10 != 0 && day > 20 {
                    continue;
                }
                for (i, rep) in reported.iter().enumerate() {
                    let sparse = stats.penalty_event(i, rep, &params);
                    let dense = dense_event(&log, i, rep, day, params.gamma, n_types, n);
                    assert_eq!(sparse, dense, "day {day} player {i}");
                }
            }
        }
    }

    #[test]
    fn counts_marginalize_consistently_after_many_updates() {
        // recompute every count from the raw bid log and check the joint
        // tables marginalize to both the opposing-profile and own-type counts
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let (n, n_types) = (3, 3);
        let mut stats = DiscrepancyStats::new(n, n_types);
        let mut log: Vec<Vec<usize>> = Vec::new();
        for _ in 0..1000 {
            let bids: Vec<usize> = (0..n).map(|_| rng.random_range(0..n_types)).collect();
            stats.update(&bids).unwrap();
            log.push(bids);
        }
        assert_eq!(stats.day(), 1000);
        for i in 0..n {
            for t in 0..n_types {
                let raw = log.iter().filter(|b| b[i] == t).count() as u64;
                assert_eq!(stats.type_count(i, t), raw);
            }
            // every observed opposing profile: joint rows sum to the group count
            let mut seen: std::collections::BTreeSet<Vec<usize>> = Default::default();
            for b in &log {
                seen.insert(DiscrepancyStats::others_key(b, i));
            }
            let mut total = 0u64;
            for key in seen {
                let group = stats.others_count(i, &key);
                let joint_sum: u64 = (0..n_types).map(|t| stats.joint_count(i, t, &key)).sum();
                assert_eq!(joint_sum, group);
                total += group;
            }
            assert_eq!(total, 1000);
        }
    }

    /// Brute-force event evaluation over every profile in Δⁿ.
    fn dense_event(
        log: &[Vec<usize>],
        player: usize,
        reported: &Supertype,
        day: u64,
        gamma: f64,
        n_types: usize,
        n: usize,
    ) -> bool {
        let l = day as f64;
        let r = window_r(day, gamma);
        for t in 0..n_types {
            let cnt = log.iter().filter(|b| b[player] == t).count() as f64;
            if (cnt / l - reported.prob(t)).abs() >= r {
                return true;
            }
        }
        let mut profile = vec![0usize; n];
        loop {
            let joint = log.iter().filter(|b| **b == profile).count() as f64;
            let others = log
                .iter()
                .filter(|b| {
                    b.iter()
                        .enumerate()
                        .all(|(j, &t)| j == player || t == profile[j])
                })
                .count() as f64;
            let h = joint / l - reported.prob(profile[player]) * (others / l);
            if h.abs() >= r {
                return true;
            }
            let mut j = n;
            loop {
                if j == 0 {
                    return false;
                }
                j -= 1;
                profile[j] += 1;
                if profile[j] < n_types {
                    break;
                }
                profile[j] = 0;
            }
        }
    }

    #[test]
    fn payment_breakdown_totals() {
        let p = PaymentBreakdown::assemble(0.25, 0.5, 0.0);
        assert_eq!(p.total, 0.75);
        let p = PaymentBreakdown::assemble(0.25, -0.5, 0.0);
        assert_eq!(p.total, -0.25);
        let p = PaymentBreakdown::assemble(0.0, 0.0, 0.0);
        assert_eq!(p.total, 0.0);
    }

    #[test]
    fn first_stage_payment_on_reference_game() {
        let (g1, sts) = uniform_allocation_game();
        assert_eq!(first_stage_payment(&g1, &sts, 0).unwrap(), 0.25);
        assert_eq!(first_stage_payment(&g1, &sts, 1).unwrap(), 0.0);
    }

    #[test]
    fn first_stage_payment_single_player_no_externality() {
        let types = crate::game::TypeSpace::new(vec!["0".into(), "1".into()]).unwrap();
        let spec = crate::game::GameSpec::new(
            1,
            types,
            vec!["a".into()],
            vec!["keep".into(), "give".into()],
            |_, t, _, o2| if o2 == 1 { t as f64 } else { 0.0 },
            |_, _| 0.0,
        )
        .unwrap();
        let sts = vec![Supertype::uniform(2)];
        assert_eq!(first_stage_payment(&spec, &sts, 0).unwrap(), 0.0);
    }

    #[test]
    fn second_stage_payment_examples() {
        let (g1, sts) = uniform_allocation_game();
        let params = MechanismParams::standard(100);
        // day bid (1,0): allocation to player 1, realized 1, expected 0.5
        let p = second_stage_payment(&g1, &sts, &[1, 0], 0, 1, false, &params, &()).unwrap();
        assert_eq!(p, 0.5);
        // day bid (0,1): allocation to player 2, player 1 realizes 0
        let p = second_stage_payment(&g1, &sts, &[0, 1], 0, 1, false, &params, &()).unwrap();
        assert_eq!(p, -0.5);
        // penalty day at l = 10 with quadratic fines adds 100
        let base = second_stage_payment(&g1, &sts, &[1, 0], 0, 10, false, &params, &()).unwrap();
        let fined = second_stage_payment(&g1, &sts, &[1, 0], 0, 10, true, &params, &()).unwrap();
        assert_eq!(fined - base, 100.0);
    }

    #[test]
    fn truthful_base_transfer_has_zero_mean() {
        // enumerate E[v_i(δ̂_i, rules) − E v_i] under truthful bids: exactly the
        // same enumeration on both sides, so the mean vanishes
        let (g1, sts) = uniform_allocation_game();
        for i in 0..2 {
            let expected = Game::expected_valuation(&g1, &sts, i).unwrap().value;
            let mut acc = 0.0;
            let o1 = Game::optimal_first_stage(&g1, &sts).unwrap();
            crate::game::for_each_support_profile(&sts, |profile, prob| {
                let o2 = Game::optimal_second_stage(&g1, &o1, profile, &());
                acc += prob * (Game::valuation(&g1, i, profile[i], &o1, &o2) - expected);
            })
            .unwrap();
            assert!(acc.abs() < 1e-12);
        }
    }
}
