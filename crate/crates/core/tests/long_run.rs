//! Long-horizon behavior: estimator convergence and the correlation detector.

use mechsim::engine::{
    estimate_utility, run_simulation, verify_product_form, SimulationConfig,
};
use mechsim::game::fixtures::uniform_allocation_game;
use mechsim::game::{GameSpec, Supertype};
use mechsim::mechanism::{window_r, MechanismParams};
use mechsim::strategies::Strategy;

fn config<'a>(
    game: &'a GameSpec,
    sts: &[Supertype],
    strategies: Vec<Strategy>,
    horizon: u64,
    seed: u64,
) -> SimulationConfig<'a, GameSpec> {
    SimulationConfig {
        game,
        strategies,
        true_supertypes: sts.to_vec(),
        params: MechanismParams::standard(horizon),
        seed,
    }
}

#[test]
fn truthful_utilities_converge_to_the_vcg_surplus() {
    // each player's long-run utility approaches its marginal contribution,
    // 0.75 − 0.5 = 0.25
    let (g1, sts) = uniform_allocation_game();
    let cfg = config(&g1, &sts, vec![Strategy::Truthful; 2], 50_000, 123);
    let ledger = run_simulation(&cfg).unwrap();
    for i in 0..2 {
        let u = estimate_utility(&ledger, i);
        assert!((u - 0.25).abs() <= 0.02, "player {i} utility {u}");
    }
}

#[test]
fn truthful_bid_logs_form_a_product_law() {
    let (g1, sts) = uniform_allocation_game();
    let cfg = config(&g1, &sts, vec![Strategy::Truthful; 2], 50_000, 9);
    let ledger = run_simulation(&cfg).unwrap();
    let gap = verify_product_form(&ledger, &ledger.reported);
    assert!(gap <= 2.0 * window_r(50_000, 1.0), "gap {gap}");
}

#[test]
fn correlated_pair_is_caught_by_the_joint_statistic() {
    // two players keying their bids off yesterday's outcome stay marginally
    // clean but correlate with each other; the joint statistic pins them and
    // the fines never stop
    let (g1, sts) = uniform_allocation_game();
    let horizon = 50_000;
    let cfg = config(
        &g1,
        &sts,
        vec![
            Strategy::correlated_mimic(1, 0.3),
            Strategy::correlated_mimic(0, 0.3),
        ],
        horizon,
        0,
    );
    let ledger = run_simulation(&cfg).unwrap();
    let r = window_r(horizon, 1.0);
    for i in 0..2 {
        // quota rebalancing holds the marginal inside the final window
        let max_f = (0..2)
            .map(|t| ledger.stats.discrepancy_f(i, t, &ledger.reported[i]).abs())
            .fold(0.0_f64, f64::max);
        assert!(max_f <= r, "player {i} marginal drifted: {max_f} > {r}");
        // but the joint statistic sits far outside it
        let max_h = (0..2)
            .flat_map(|a| (0..2).map(move |b| [a, b]))
            .map(|d| ledger.stats.correlation_h(i, &d, &ledger.reported[i]).abs())
            .fold(0.0_f64, f64::max);
        assert!(max_h >= r, "player {i} correlation escaped: {max_h} < {r}");
        // penalty days persist through the tail of the run
        let tail = ledger.penalty_days_from(i, 30_000);
        assert!(tail > 10_000, "player {i} only fined on {tail} tail days");
    }
}

#[test]
fn single_mimic_against_truthful_play_stays_clean() {
    // with IID opponents, yesterday's outcome carries no information about
    // today's bids: one mimic alone correlates with nothing and the joint
    // statistic stays inside the window almost every day
    let (g1, sts) = uniform_allocation_game();
    let cfg = config(
        &g1,
        &sts,
        vec![Strategy::correlated_mimic(1, 0.3), Strategy::Truthful],
        50_000,
        3,
    );
    let ledger = run_simulation(&cfg).unwrap();
    assert_eq!(ledger.penalty_days_from(0, 1_000), 0);
    assert_eq!(ledger.penalty_days_from(1, 1_000), 0);
}
