//! Writes the bundled replay fixture: three synthetic sellers, 200 rounds.
//!
//! Usage: cargo run --example make_fixture -- <output-dir>

use std::path::PathBuf;

use forecast_market::combination::QuantileLevel;
use forecast_market::io::{
    write_forecast_csv, write_realizations_csv, ForecastRow, ForecastTable, Realizations,
};
use forecast_market::rng::derive_rng;
use forecast_market::scenario::{gen_time_invariant, ScenarioConfig};

const ROUNDS: usize = 200;
const SEED: u64 = 7;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(
        std::env::args()
            .nth(1)
            .ok_or("usage: make_fixture <output-dir>")?,
    );
    std::fs::create_dir_all(&dir)?;
    let levels: Vec<QuantileLevel> = [0.1, 0.5, 0.9]
        .iter()
        .map(|&t| QuantileLevel::new(t))
        .collect::<Result<_, _>>()?;
    let config = ScenarioConfig {
        horizon: ROUNDS,
        runs: 1,
        quantile_levels: levels.clone(),
        seed: SEED,
        ..ScenarioConfig::time_invariant()
    };
    let mut table = ForecastTable::new(levels, 1);
    let mut realizations = Realizations::default();
    for t in 0..ROUNDS {
        let sample = gen_time_invariant(&config, &mut derive_rng(SEED, 0, t as u64), t)?;
        for (i, quantiles) in sample.submissions.into_iter().enumerate() {
            table
                .push(ForecastRow {
                    timestamp: t as u64,
                    seller: format!("seller{}", i + 1),
                    horizon: 0,
                    quantiles,
                })
                .map_err(|e| format!("{e:?}"))?;
        }
        realizations.rows.push((t as u64, sample.y));
    }
    write_forecast_csv(&dir.join("forecasts.csv"), &table)?;
    write_realizations_csv(&dir.join("realizations.csv"), &realizations)?;
    Ok(())
}
