//! End-to-end checks of the command-line surface: exit codes, emitted files
//! and byte-level reproducibility.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mechsim"))
}

fn repo_config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("mechsim-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

#[test]
fn simulate_is_reproducible_byte_for_byte() {
    let out_a = tmp_dir("sim-a");
    let out_b = tmp_dir("sim-b");
    for out in [&out_a, &out_b] {
        let status = bin()
            .args(["simulate", "--config"])
            .arg(repo_config("binary_allocation.json"))
            .args(["--days", "200", "--seed", "11", "--out"])
            .arg(out)
            .status()
            .expect("spawn");
        assert!(status.success());
    }
    for file in ["ledger.csv", "summary.json"] {
        let a = std::fs::read(out_a.join(file)).unwrap();
        let b = std::fs::read(out_b.join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between identical runs");
    }
    let manifest = std::fs::read_to_string(out_a.join("run_manifest.json")).unwrap();
    assert!(manifest.contains("\"config_hash\""));
    assert!(manifest.contains("\"days\": 200"));
}

#[test]
fn simulate_runs_the_market_instance() {
    let out = tmp_dir("sim-dr");
    let status = bin()
        .args(["simulate", "--config"])
        .arg(repo_config("dr_default.json"))
        .args(["--days", "20", "--seed", "2", "--out"])
        .arg(&out)
        .status()
        .expect("spawn");
    assert!(status.success());
    let ledger = std::fs::read_to_string(out.join("ledger.csv")).unwrap();
    let mut lines = ledger.lines();
    assert_eq!(
        lines.next().unwrap(),
        "day,player,true_type,bid,o1,o2,valuation,p_first,p_second_base,penalty,p_total,penalty_flag"
    );
    // 20 days x 3 providers
    assert_eq!(lines.count(), 60);
}

#[test]
fn missing_config_exits_with_usage_error() {
    let out = tmp_dir("sim-missing");
    let status = bin()
        .args(["simulate", "--config", "/nonexistent/config.json", "--out"])
        .arg(&out)
        .status()
        .expect("spawn");
    assert_eq!(status.code(), Some(2));
}

#[test]
fn malformed_config_exits_with_usage_error() {
    let out = tmp_dir("sim-bad");
    let dir = tmp_dir("sim-badcfg");
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("broken.json");
    std::fs::write(&cfg, "{\"strategies\": []}").unwrap();
    let output = bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .args(["--seed", "1", "--out"])
        .arg(&out)
        .output()
        .expect("spawn");
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("error"), "stderr was: {stderr}");
}

#[test]
fn unknown_experiment_kind_is_rejected() {
    let out = tmp_dir("exp-unknown");
    let status = bin()
        .args(["experiment", "nonsense", "--out"])
        .arg(&out)
        .status()
        .expect("spawn");
    assert_eq!(status.code(), Some(2));
}

#[test]
fn social_cost_experiment_emits_a_decreasing_curve() {
    let out = tmp_dir("exp-n");
    let status = bin()
        .args(["experiment", "social_cost_vs_n", "--seeds", "1,2,3", "--days", "50", "--out"])
        .arg(&out)
        .status()
        .expect("spawn");
    assert!(status.success());
    let csv = std::fs::read_to_string(out.join("social_cost_vs_n.csv")).unwrap();
    let mut means = Vec::new();
    for line in csv.lines().skip(1) {
        let mean: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        means.push(mean);
    }
    assert_eq!(means.len(), 8);
    assert!(means.windows(2).all(|w| w[1] < w[0]), "curve: {means:?}");
    assert!(out.join("run_manifest.json").exists());
}

#[test]
fn posted_price_experiment_reports_the_anchor_gap() {
    let out = tmp_dir("exp-pp");
    let status = bin()
        .args(["experiment", "posted_price_comparison", "--config"])
        .arg(repo_config("posted_price_pointmass.json"))
        .args(["--seeds", "1", "--out"])
        .arg(&out)
        .status()
        .expect("spawn");
    assert!(status.success());
    let csv = std::fs::read_to_string(out.join("posted_price_comparison.csv")).unwrap();
    let mut best = f64::INFINITY;
    let mut mech = f64::NAN;
    for line in csv.lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        best = best.min(cells[1].parse::<f64>().unwrap());
        mech = cells[3].parse::<f64>().unwrap();
    }
    // degenerate instance: the best posted price recovers the optimum
    assert!((best - mech).abs() <= 1e-9, "best {best}, mechanism {mech}");
    assert!((mech - 14.0).abs() <= 1e-9);
}
