//! Fixture replay against committed golden files. Set `UPDATE_GOLDEN=1` to
//! regenerate them.

mod common;

use forecast_market::io::{emit_report, LEDGER_FILE};
use forecast_market::market::write_ledger;

const REPORT_FILES: [&str; 4] = [
    "weights.csv",
    "rewards.csv",
    "losses.csv",
    "reward_totals.csv",
];

#[test]
fn fixture_replay_matches_golden_files() {
    let output = common::replay_fixture();
    let scratch = tempfile::tempdir().unwrap();
    let mut ledger = Vec::new();
    write_ledger(&mut ledger, &output.ledger).unwrap();
    std::fs::write(scratch.path().join(LEDGER_FILE), &ledger).unwrap();
    emit_report(&output.ledger, scratch.path()).unwrap();

    let golden = common::golden_dir();
    let names = std::iter::once(LEDGER_FILE).chain(REPORT_FILES);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(&golden).unwrap();
        for name in names {
            std::fs::copy(scratch.path().join(name), golden.join(name)).unwrap();
        }
        return;
    }
    for name in names {
        let fresh = std::fs::read(scratch.path().join(name)).unwrap();
        let expected = std::fs::read(golden.join(name))
            .unwrap_or_else(|e| panic!("{name}: {e}; run with UPDATE_GOLDEN=1 to create it"));
        assert!(fresh == expected, "{name} differs from the golden copy");
    }
}

#[test]
fn golden_rewards_balance_the_budget() {
    let text = std::fs::read_to_string(common::golden_dir().join("rewards.csv")).unwrap();
    for line in text.lines().skip(1) {
        let fields: Vec<f64> = line.split(',').map(|f| f.parse().unwrap()).collect();
        let (utility, sellers) = (fields[fields.len() - 1], &fields[1..fields.len() - 1]);
        let paid: f64 = sellers.iter().sum();
        assert!((paid - utility).abs() <= 1e-9 * utility.max(1.0), "{line}");
    }
}
