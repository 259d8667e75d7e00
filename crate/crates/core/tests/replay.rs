mod common;

use std::path::Path;

use forecast_market::combination::QuantileLevel;
use forecast_market::io::{
    emit_report, load_forecast_csv, run_replay, ForecastRow, ForecastTable, Realizations,
};
use forecast_market::market::{read_ledger, replay_ledger, write_ledger, LedgerEntry};

fn levels(taus: &[f64]) -> Vec<QuantileLevel> {
    taus.iter()
        .map(|&t| QuantileLevel::new(t).unwrap())
        .collect()
}

fn table(rows: &[(u64, &str, [f64; 1])]) -> ForecastTable {
    let mut table = ForecastTable::new(levels(&[0.5]), 1);
    for &(timestamp, seller, q) in rows {
        table
            .push(ForecastRow {
                timestamp,
                seller: seller.into(),
                horizon: 0,
                quantiles: q.to_vec(),
            })
            .unwrap();
    }
    table
}

fn single_level_config() -> forecast_market::io::RunConfig {
    forecast_market::io::parse_config(
        "mode = \"replay\"\nquantile_levels = [0.5]\n[replay]\nforecasts = \"f\"\nrealizations = \"r\"\nutility = 10",
    )
    .unwrap()
}

fn settlements(
    ledger: &[LedgerEntry],
) -> impl Iterator<Item = &forecast_market::market::SettlementRecord> {
    ledger.iter().filter_map(|e| match e {
        LedgerEntry::Settlement(r) => Some(r),
        _ => None,
    })
}

#[test]
fn dominant_seller_wins_out_of_sample_every_round() {
    let ys: Vec<f64> = (0..30).map(|t| (t as f64 * 0.7).sin() * 3.0).collect();
    let rows: Vec<(u64, &str, [f64; 1])> = ys
        .iter()
        .enumerate()
        .flat_map(|(t, &y)| [(t as u64, "close", [y + 0.1]), (t as u64, "far", [y - 2.0])])
        .collect();
    let realizations = Realizations {
        rows: ys.iter().enumerate().map(|(t, &y)| (t as u64, y)).collect(),
    };
    let out = run_replay(&single_level_config(), &table(&rows), &realizations).unwrap();
    for record in settlements(&out.ledger) {
        let level = &record.levels[0];
        assert!(level.r_oos[0] > level.r_oos[1], "t={}", record.t);
    }
}

#[test]
fn duplicated_columns_earn_equal_totals() {
    let ys: Vec<f64> = (0..40).map(|t| ((t * 7919) % 13) as f64 / 3.0).collect();
    let rows: Vec<(u64, &str, [f64; 1])> = ys
        .iter()
        .enumerate()
        .flat_map(|(t, &y)| {
            let x = y + ((t % 5) as f64 - 2.0) * 0.4;
            [
                (t as u64, "a", [x]),
                (t as u64, "b", [x]),
                (t as u64, "c", [y + 1.0]),
            ]
        })
        .collect();
    let realizations = Realizations {
        rows: ys.iter().enumerate().map(|(t, &y)| (t as u64, y)).collect(),
    };
    let out = run_replay(&single_level_config(), &table(&rows), &realizations).unwrap();
    assert_eq!(out.rewards.total[0], out.rewards.total[1]);
    assert_eq!(out.rewards.in_sample[0], out.rewards.in_sample[1]);
}

#[test]
fn gaps_replay_as_missing_sellers() {
    let rows = [
        (0, "a", [1.0]),
        (0, "b", [2.0]),
        (1, "a", [1.5]),
        (2, "b", [2.5]),
    ];
    let realizations = Realizations {
        rows: vec![(0, 1.2), (1, 1.4), (2, 2.2)],
    };
    let out = run_replay(&single_level_config(), &table(&rows), &realizations).unwrap();
    let masks: Vec<Vec<bool>> = settlements(&out.ledger)
        .map(|r| r.alpha.as_slice().to_vec())
        .collect();
    assert_eq!(
        masks,
        [vec![false, false], vec![false, true], vec![true, false]]
    );
    let record = settlements(&out.ledger).nth(1).unwrap();
    assert_eq!(record.totals[1], 0.0);
}

#[test]
fn empty_or_unmatched_inputs_are_rejected() {
    let config = single_level_config();
    let rows = [(0, "a", [1.0])];
    assert!(run_replay(&config, &table(&rows), &Realizations::default()).is_err());
    let realizations = Realizations {
        rows: vec![(1, 0.0)],
    };
    assert!(run_replay(&config, &table(&rows), &realizations).is_err());
}

fn read_csv(dir: &Path, name: &str) -> Vec<Vec<String>> {
    std::fs::read_to_string(dir.join(name))
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn one_round_ledger_gives_one_row_per_file() {
    let rows = [(0, "a", [1.0])];
    let realizations = Realizations {
        rows: vec![(0, 0.5)],
    };
    let out = run_replay(&single_level_config(), &table(&rows), &realizations).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = emit_report(&out.ledger, dir.path()).unwrap();
    assert_eq!(files.len(), 4);
    for file in files {
        let text = std::fs::read_to_string(&file).unwrap();
        assert_eq!(text.lines().count(), 2, "{}", file.display());
    }
}

#[test]
fn report_rewards_sum_to_utility_and_emission_is_stable() {
    let out = common::replay_fixture();
    let first = tempfile::tempdir().unwrap();
    let second = tempfile::tempdir().unwrap();
    emit_report(&out.ledger, first.path()).unwrap();
    emit_report(&out.ledger, second.path()).unwrap();
    for name in [
        "weights.csv",
        "rewards.csv",
        "losses.csv",
        "reward_totals.csv",
    ] {
        assert_eq!(
            std::fs::read(first.path().join(name)).unwrap(),
            std::fs::read(second.path().join(name)).unwrap()
        );
    }
    for row in read_csv(first.path(), "rewards.csv").iter().skip(1) {
        let values: Vec<f64> = row.iter().map(|v| v.parse().unwrap()).collect();
        let paid: f64 = values[1..values.len() - 1].iter().sum();
        let utility = values[values.len() - 1];
        assert!((paid - utility).abs() <= 1e-9 * utility);
    }
}

#[test]
fn fixture_ledger_round_trips_and_replays() {
    let out = common::replay_fixture();
    let mut bytes = Vec::new();
    write_ledger(&mut bytes, &out.ledger).unwrap();
    let back = read_ledger(bytes.as_slice()).unwrap();
    assert_eq!(back, out.ledger);
    let market = replay_ledger(&back).unwrap();
    let last = settlements(&out.ledger).last().unwrap();
    for (model, level) in market.models().iter().zip(&last.levels) {
        assert_eq!(model.weights(), level.w.as_slice());
        assert_eq!(model.correction(), level.d.as_slice());
    }
}

#[test]
fn fixture_table_reloads_identically() {
    let config = common::fixture_config();
    let table = load_forecast_csv(
        std::slice::from_ref(&config.replay.forecasts),
        &config.quantile_levels,
        1,
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.csv");
    forecast_market::io::write_forecast_csv(&path, &table).unwrap();
    assert_eq!(
        std::fs::read(&path).unwrap(),
        std::fs::read(&config.replay.forecasts).unwrap()
    );
}
