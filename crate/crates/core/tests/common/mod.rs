#![allow(dead_code)]

use std::path::{Path, PathBuf};

use forecast_market::io::{
    load_forecast_csv, load_realizations_csv, parse_config_table, run_replay, ReplayOutput,
    RunConfig,
};

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/replay")
}

pub fn golden_dir() -> PathBuf {
    fixture_dir().join("golden")
}

/// The bundled fixture configuration with input paths made absolute.
pub fn fixture_config() -> RunConfig {
    let dir = fixture_dir();
    let text = std::fs::read_to_string(dir.join("config.toml")).unwrap();
    let mut table: toml::Table = text.parse().unwrap();
    let replay = table["replay"].as_table_mut().unwrap();
    for key in ["forecasts", "realizations"] {
        let rel = replay[key].as_str().unwrap().to_string();
        replay.insert(key.into(), dir.join(rel).display().to_string().into());
    }
    parse_config_table(table).unwrap()
}

pub fn replay_fixture() -> ReplayOutput {
    let config = fixture_config();
    let table = load_forecast_csv(
        std::slice::from_ref(&config.replay.forecasts),
        &config.quantile_levels,
        config.replay.horizon_steps,
    )
    .unwrap();
    let realizations = load_realizations_csv(&config.replay.realizations).unwrap();
    run_replay(&config, &table, &realizations).unwrap()
}
