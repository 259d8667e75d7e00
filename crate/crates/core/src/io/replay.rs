use super::config::RunConfig;
use super::forecast::{ForecastTable, Realizations};
use super::report::{loss_summary, reward_summary, LossSummary, RewardSummary};
use super::IoError;
use crate::market::{LedgerEntry, Market, MarketTask};

#[derive(Clone, Debug, PartialEq)]
pub struct ReplayOutput {
    pub ledger: Vec<LedgerEntry>,
    pub losses: LossSummary,
    pub rewards: RewardSummary,
}

/// Drives a market through every realization in order: each timestamp is
/// one session, sellers with a complete row submit, the rest are missing,
/// and the configured utility is paid at each settlement.
pub fn run_replay(
    config: &RunConfig,
    table: &ForecastTable,
    realizations: &Realizations,
) -> Result<ReplayOutput, IoError> {
    if realizations.rows.is_empty() {
        return Err(IoError::Invalid(
            "replay needs at least one realization".into(),
        ));
    }
    if table.sellers.is_empty() {
        return Err(IoError::Invalid("forecast table has no sellers".into()));
    }
    if table.levels != config.quantile_levels || table.horizon_steps != config.replay.horizon_steps
    {
        return Err(IoError::Invalid(
            "forecast table layout differs from the configuration".into(),
        ));
    }
    if let Some(t) = table
        .timestamps()
        .into_iter()
        .find(|t| realizations.rows.binary_search_by_key(t, |r| r.0).is_err())
    {
        return Err(IoError::Invalid(format!(
            "forecasts at timestamp {t} have no realization"
        )));
    }

    let levels: Vec<f64> = config.quantile_levels.iter().map(|q| q.get()).collect();
    let task = MarketTask::new(
        config.replay.task_id.clone(),
        &levels,
        config.replay.horizon_steps,
    )?;
    let ids: Vec<&str> = table.sellers.iter().map(String::as_str).collect();
    let mut market = Market::new(task, &ids, config.engine, config.allocation, config.seed)?;
    for &(t, y) in &realizations.rows {
        market.open_session(t)?;
        for (i, id) in ids.iter().enumerate() {
            if let Some(values) = table.submission(t, i) {
                market.submit_forecast(t, id, &values)?;
            }
        }
        market.close_and_aggregate(t)?;
        market.settle_session(t, y, config.replay.utility)?;
    }
    let ledger = market
        .ledger()
        .expect("replay markets keep their ledger")
        .to_vec();
    Ok(ReplayOutput {
        losses: loss_summary(&ledger)?,
        rewards: reward_summary(&ledger)?,
        ledger,
    })
}
