//! Day-by-day simulation of the repeated game and finite-horizon estimators.
//!
//! A run fixes true supertypes, strategies, mechanism parameters and a seed,
//! then plays the game for the configured horizon: supertype bids are
//! collected once, each day nature draws true types, policies bid, the
//! planner picks the recourse action, discrepancy statistics advance, and
//! payments are recorded. Ledgers are bit-reproducible from their config.

use std::collections::BTreeMap;
use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::game::{Game, Supertype, TypeSpace};
use crate::mechanism::{
    first_stage_payment, penalty_charge, window_r, DiscrepancyStats, MechanismParams,
    PaymentBreakdown,
};
use crate::strategies::{HistoryView, Strategy};
use crate::stream;
use crate::{fnv1a_init, fnv1a_write};

/// Everything a run depends on. The game is borrowed so batches over seeds or
/// strategies share one instance.
#[derive(Debug)]
pub struct SimulationConfig<'a, G: Game> {
    pub game: &'a G,
    pub strategies: Vec<Strategy>,
    pub true_supertypes: Vec<Supertype>,
    pub params: MechanismParams,
    pub seed: u64,
}

// manual impl: the derive would demand G: Clone for a borrowed game
impl<G: Game> Clone for SimulationConfig<'_, G> {
    fn clone(&self) -> Self {
        Self {
            game: self.game,
            strategies: self.strategies.clone(),
            true_supertypes: self.true_supertypes.clone(),
            params: self.params,
            seed: self.seed,
        }
    }
}

/// One day of play: draws, bids, outcomes and per-player accounting.
/// Valuations are evaluated at the players' true types; the second-stage
/// payment base uses their bids.
#[derive(Debug, Clone, PartialEq)]
pub struct DayRecord<O2> {
    pub day: u64,
    pub true_types: Vec<usize>,
    pub bids: Vec<usize>,
    pub o2: O2,
    pub cost: f64,
    pub valuations: Vec<f64>,
    pub payments: Vec<PaymentBreakdown>,
    pub penalty_flags: Vec<bool>,
}

/// Full record of a run.
#[derive(Debug, Clone)]
pub struct Ledger<G: Game> {
    pub config_digest: u64,
    pub seed: u64,
    pub params: MechanismParams,
    pub types: TypeSpace,
    /// First-stage bids actually submitted.
    pub reported: Vec<Supertype>,
    /// Per-player expected valuation under the bid law, fixed on day 1.
    pub expected_valuations: Vec<f64>,
    /// Per-player VCG charge, fixed on day 1.
    pub first_stage_payments: Vec<f64>,
    pub o1: G::O1,
    pub days: Vec<DayRecord<G::O2>>,
    pub stats: DiscrepancyStats,
}

impl<G: Game> Ledger<G> {
    pub fn horizon(&self) -> u64 {
        self.days.len() as u64
    }

    pub fn n_players(&self) -> usize {
        self.reported.len()
    }

    /// Days on which `player` was fined.
    pub fn penalty_day_count(&self, player: usize) -> u64 {
        self.days
            .iter()
            .filter(|d| d.penalty_flags[player])
            .count() as u64
    }

    /// Days `>= from_day` on which `player` was fined.
    pub fn penalty_days_from(&self, player: usize, from_day: u64) -> u64 {
        self.days
            .iter()
            .filter(|d| d.day >= from_day && d.penalty_flags[player])
            .count() as u64
    }
}

fn config_digest<G: Game>(cfg: &SimulationConfig<'_, G>) -> u64 {
    let mut h = fnv1a_init();
    fnv1a_write(&mut h, &cfg.game.digest().to_le_bytes());
    let strategies = serde_json::to_string(&cfg.strategies).expect("strategies serialize");
    fnv1a_write(&mut h, strategies.as_bytes());
    for s in &cfg.true_supertypes {
        for &p in s.masses() {
            fnv1a_write(&mut h, &p.to_bits().to_le_bytes());
        }
    }
    fnv1a_write(&mut h, &cfg.params.gamma.to_bits().to_le_bytes());
    fnv1a_write(&mut h, &cfg.params.penalty_exponent.to_bits().to_le_bytes());
    fnv1a_write(&mut h, &cfg.params.horizon.to_le_bytes());
    fnv1a_write(&mut h, &cfg.seed.to_le_bytes());
    h
}

/// Plays the repeated game to the configured horizon.
pub fn run_simulation<G: Game>(cfg: &SimulationConfig<'_, G>) -> Result<Ledger<G>> {
    let game = cfg.game;
    let n = game.num_players();
    let n_types = game.types().len();
    if cfg.strategies.len() != n {
        return Err(Error::ProfileMismatch {
            expected: n,
            got: cfg.strategies.len(),
        });
    }
    if cfg.true_supertypes.len() != n {
        return Err(Error::ProfileMismatch {
            expected: n,
            got: cfg.true_supertypes.len(),
        });
    }
    for (i, s) in cfg.true_supertypes.iter().enumerate() {
        if s.len() != n_types {
            return Err(Error::Config(format!(
                "player {i}: true supertype covers {} types, space has {n_types}",
                s.len()
            )));
        }
    }
    for (i, s) in cfg.strategies.iter().enumerate() {
        s.validate(n_types, i, n)?;
    }

    // First stage: supertype bids are submitted once, on day 1.
    let reported: Vec<Supertype> = cfg
        .strategies
        .iter()
        .zip(&cfg.true_supertypes)
        .map(|(s, theta)| s.first_stage(theta))
        .collect();
    let o1 = game.optimal_first_stage(&reported)?;
    let o1_code = {
        // stable enough for policies that only need to distinguish commitments
        let mut h = fnv1a_init();
        fnv1a_write(&mut h, format!("{:?}", o1).as_bytes());
        h
    };
    let expected_valuations: Vec<f64> = (0..n)
        .map(|i| game.expected_valuation(&reported, i).map(|e| e.value))
        .collect::<Result<_>>()?;
    let first_stage: Vec<f64> = (0..n)
        .map(|i| first_stage_payment(game, &reported, i))
        .collect::<Result<_>>()?;

    let mut type_rngs: Vec<_> = (0..n)
        .map(|j| stream::substream(cfg.seed, stream::TYPE_DRAWS, j as u64))
        .collect();
    let mut strategy_rngs: Vec<_> = (0..n)
        .map(|j| stream::substream(cfg.seed, stream::STRATEGY, j as u64))
        .collect();
    let mut shock_rng = stream::substream(cfg.seed, stream::SHOCK, 0);

    let mut stats = DiscrepancyStats::new(n, n_types);
    let mut days: Vec<DayRecord<G::O2>> = Vec::with_capacity(cfg.params.horizon as usize);

    // Per-player visible history, fed back to the policies.
    let mut own_types: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut own_bids: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut bid_counts: Vec<Vec<u64>> = vec![vec![0; n_types]; n];
    let mut outcome_codes: Vec<u64> = Vec::new();

    let mut true_types = vec![0usize; n];
    let mut bids = vec![0usize; n];

    for day in 1..=cfg.params.horizon {
        for (j, rng) in type_rngs.iter_mut().enumerate() {
            let u: f64 = rng.random();
            true_types[j] = cfg.true_supertypes[j].quantile(u);
        }
        let shock = game.draw_shock(day, &mut shock_rng);
        let window = window_r(day, cfg.params.gamma);
        for i in 0..n {
            let view = HistoryView {
                day,
                window,
                o1_code,
                own_true_types: &own_types[i],
                own_bids: &own_bids[i],
                outcome_codes: &outcome_codes,
                own_bid_counts: &bid_counts[i],
            };
            let bid = cfg.strategies[i].second_stage_bid(
                &view,
                true_types[i],
                &reported[i],
                &mut strategy_rngs[i],
            );
            if bid >= n_types {
                return Err(Error::InvalidBid {
                    player: i,
                    day,
                    bid,
                    n_types,
                });
            }
            bids[i] = bid;
        }
        let o2 = game.optimal_second_stage(&o1, &bids, &shock);
        stats.update(&bids)?;

        let mut payments = Vec::with_capacity(n);
        let mut flags = Vec::with_capacity(n);
        let mut valuations = Vec::with_capacity(n);
        for i in 0..n {
            let flagged = stats.penalty_event(i, &reported[i], &cfg.params);
            let base = game.valuation(i, bids[i], &o1, &o2) - expected_valuations[i];
            let fine = if flagged {
                penalty_charge(day, &cfg.params)
            } else {
                0.0
            };
            flags.push(flagged);
            payments.push(PaymentBreakdown::assemble(first_stage[i], base, fine));
            valuations.push(game.valuation(i, true_types[i], &o1, &o2));
        }
        let cost = game.cost(&o1, &o2);

        let code = game.o2_code(&o2);
        days.push(DayRecord {
            day,
            true_types: true_types.clone(),
            bids: bids.clone(),
            o2,
            cost,
            valuations,
            payments,
            penalty_flags: flags,
        });
        for i in 0..n {
            own_types[i].push(true_types[i]);
            own_bids[i].push(bids[i]);
            bid_counts[i][bids[i]] += 1;
        }
        outcome_codes.push(code);
    }

    Ok(Ledger {
        config_digest: config_digest(cfg),
        seed: cfg.seed,
        params: cfg.params,
        types: game.types().clone(),
        reported,
        expected_valuations,
        first_stage_payments: first_stage,
        o1,
        days,
        stats,
    })
}

// ---------------------------------------------------------------------------
// Finite-horizon estimators
// ---------------------------------------------------------------------------

/// Average of true-type valuation minus total payment over the whole run.
pub fn estimate_utility<G: Game>(ledger: &Ledger<G>, player: usize) -> f64 {
    utility_through(ledger, player, ledger.horizon())
}

/// Same average restricted to days `1..=through_day`; the running utility of
/// a player part-way into a run.
pub fn utility_through<G: Game>(ledger: &Ledger<G>, player: usize, through_day: u64) -> f64 {
    let mut acc = 0.0;
    let mut count = 0u64;
    for d in &ledger.days {
        if d.day > through_day {
            break;
        }
        acc += d.valuations[player] - d.payments[player].total;
        count += 1;
    }
    if count == 0 {
        0.0
    } else {
        acc / count as f64
    }
}

/// Average realized welfare: true-type valuations minus planner cost, under
/// the bid-driven outcomes.
pub fn estimate_welfare<G: Game>(ledger: &Ledger<G>) -> f64 {
    if ledger.days.is_empty() {
        return 0.0;
    }
    let total: f64 = ledger
        .days
        .iter()
        .map(|d| d.valuations.iter().sum::<f64>() - d.cost)
        .sum();
    total / ledger.days.len() as f64
}

/// Largest gap between the empirical frequency of an observed bid profile and
/// the product of the reported marginals. Under non-bankrupting play this
/// gap shrinks with the window schedule.
pub fn verify_product_form<G: Game>(ledger: &Ledger<G>, reported: &[Supertype]) -> f64 {
    let total = ledger.days.len() as f64;
    let mut counts: BTreeMap<&[usize], u64> = BTreeMap::new();
    for d in &ledger.days {
        *counts.entry(&d.bids).or_insert(0) += 1;
    }
    let mut worst = 0.0_f64;
    for (profile, cnt) in counts {
        let mut product = 1.0;
        for (j, &t) in profile.iter().enumerate() {
            product *= reported[j].prob(t);
        }
        worst = worst.max((cnt as f64 / total - product).abs());
    }
    worst
}

/// Mean, over paired seeds, of the utility a player gives up by swapping
/// truthful play for `alt` while everyone else stays fixed. Type draws are
/// identical across the two arms of every pair.
pub fn deviation_gain<G: Game>(
    base: &SimulationConfig<'_, G>,
    player: usize,
    alt: &Strategy,
    seeds: &[u64],
) -> Result<f64> {
    if seeds.is_empty() {
        return Err(Error::InvalidInput("deviation_gain needs seeds".into()));
    }
    let gains: Vec<f64> = seeds
        .par_iter()
        .map(|&seed| -> Result<f64> {
            let mut truthful_cfg = base.clone();
            truthful_cfg.seed = seed;
            truthful_cfg.strategies[player] = Strategy::Truthful;
            let mut alt_cfg = base.clone();
            alt_cfg.seed = seed;
            alt_cfg.strategies[player] = alt.clone();
            let lt = run_simulation(&truthful_cfg)?;
            let la = run_simulation(&alt_cfg)?;
            Ok(estimate_utility(&lt, player) - estimate_utility(&la, player))
        })
        .collect::<Result<_>>()?;
    Ok(gains.iter().sum::<f64>() / gains.len() as f64)
}

// ---------------------------------------------------------------------------
// Audits
// ---------------------------------------------------------------------------

/// Replays the raw bid log through fresh statistics and checks that every
/// recorded penalty flag matches the recomputed one exactly.
pub fn audit_penalty_flags<G: Game>(ledger: &Ledger<G>) -> Result<bool> {
    let n = ledger.n_players();
    let n_types = ledger.types.len();
    let mut stats = DiscrepancyStats::new(n, n_types);
    for d in &ledger.days {
        stats.update(&d.bids)?;
        for i in 0..n {
            let expect = stats.penalty_event(i, &ledger.reported[i], &ledger.params);
            if expect != d.penalty_flags[i] {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// For shock-free games, checks every recorded recourse action against a
/// fresh argmax over the day's bids.
pub fn audit_outcomes<G: Game<Shock = ()>>(game: &G, ledger: &Ledger<G>) -> bool {
    ledger
        .days
        .iter()
        .all(|d| game.optimal_second_stage(&ledger.o1, &d.bids, &()) == d.o2)
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

/// Headline numbers of one run.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub utilities: Vec<f64>,
    pub welfare: f64,
    pub penalty_days: Vec<u64>,
    pub product_form_gap: f64,
}

pub fn summarize<G: Game>(ledger: &Ledger<G>) -> RunSummary {
    let n = ledger.n_players();
    RunSummary {
        utilities: (0..n).map(|i| estimate_utility(ledger, i)).collect(),
        welfare: estimate_welfare(ledger),
        penalty_days: (0..n).map(|i| ledger.penalty_day_count(i)).collect(),
        product_form_gap: verify_product_form(ledger, &ledger.reported),
    }
}

/// One CSV row per day per player:
/// `day,player,true_type,bid,o1,o2,valuation,p_first,p_second_base,penalty,p_total,penalty_flag`.
pub fn write_ledger_csv<G: Game>(
    game: &G,
    ledger: &Ledger<G>,
    mut out: impl Write,
) -> Result<()> {
    writeln!(
        out,
        "day,player,true_type,bid,o1,o2,valuation,p_first,p_second_base,penalty,p_total,penalty_flag"
    )?;
    let o1 = game.o1_display(&ledger.o1);
    for d in &ledger.days {
        let o2 = game.o2_display(&d.o2);
        for i in 0..ledger.n_players() {
            let p = &d.payments[i];
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                d.day,
                i,
                ledger.types.label(d.true_types[i]),
                ledger.types.label(d.bids[i]),
                o1,
                o2,
                d.valuations[i],
                p.first_stage,
                p.second_stage_base,
                p.penalty,
                p.total,
                u8::from(d.penalty_flags[i]),
            )?;
        }
    }
    Ok(())
}
