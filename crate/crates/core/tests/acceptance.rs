//! End-to-end acceptance suite: one test per criterion, each printing a
//! single pass/fail line (visible with `cargo test -- --nocapture`).

use mechsim::acceptance as acc;
use mechsim::acceptance::CriterionOutcome;

fn check(outcome: CriterionOutcome) {
    println!("{}", outcome.line());
    assert!(outcome.passed, "{}", outcome.line());
}

#[test]
fn criterion_01_exact_oracle_equivalence() {
    check(acc::criterion_01_exact_oracles());
}

#[test]
fn criterion_02_truthful_penalty_vanishing() {
    check(acc::criterion_02_truthful_penalties_vanish());
}

#[test]
fn criterion_03_truthful_welfare_optimality() {
    check(acc::criterion_03_truthful_welfare());
}

#[test]
fn criterion_04_individual_rationality() {
    check(acc::criterion_04_individual_rationality());
}

#[test]
fn criterion_05_deviation_gains_nonnegative() {
    check(acc::criterion_05_deviation_gains());
}

#[test]
fn criterion_06_product_form_of_bids() {
    check(acc::criterion_06_product_form());
}

#[test]
fn criterion_07_dispatch_closed_form() {
    check(acc::criterion_07_dispatch_closed_form());
}

#[test]
fn criterion_08_social_cost_vs_participation() {
    check(acc::criterion_08_social_cost_vs_participation());
}

#[test]
fn criterion_09_payment_sensitivity() {
    check(acc::criterion_09_payment_sensitivity());
}

#[test]
fn criterion_10_posted_price_comparison() {
    check(acc::criterion_10_posted_price_gap());
}

#[test]
fn criterion_11_replay_audit() {
    check(acc::criterion_11_replay_audit());
}
