use super::config::ScenarioConfig;
use super::generator::{gen_round, WeightPath};
use super::ScenarioError;
use crate::allocation::AllocationConfig;
use crate::market::{
    EngineConfig, Market, MarketHeader, MarketState, MarketTask, SettlementRecord,
};
use crate::rng::derive_rng;

/// A seller that shifts every submitted quantile by a constant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Misreport {
    pub seller: usize,
    pub shift: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MarketSimulation {
    pub header: MarketHeader,
    /// Per-step total reward, row-major `horizon x n`.
    pub rewards: Vec<f64>,
    pub final_state: MarketState,
    /// Settlement records, if requested.
    pub records: Vec<SettlementRecord>,
}

impl MarketSimulation {
    pub fn n(&self) -> usize {
        self.header.sellers.len()
    }

    /// Reward of `seller` summed over steps `from..`.
    pub fn reward_from(&self, seller: usize, from: usize) -> f64 {
        let n = self.n();
        self.rewards
            .chunks(n)
            .skip(from)
            .map(|row| row[seller])
            .sum()
    }
}

/// Runs run `run` of the scenario through a live market paying a constant
/// `utility` each round. Draws match [`super::run_monte_carlo`] step for
/// step, so a misreporting run shares its realizations with the truthful one.
pub fn simulate_market(
    config: &ScenarioConfig,
    run: usize,
    engine: EngineConfig,
    allocation: AllocationConfig,
    utility: f64,
    misreport: Option<Misreport>,
    keep_records: bool,
) -> Result<MarketSimulation, ScenarioError> {
    config.validate()?;
    let n = config.n();
    if let Some(m) = misreport {
        if m.seller >= n || !m.shift.is_finite() {
            return Err(ScenarioError::InvalidConfig(format!(
                "misreport targets seller {} with shift {}",
                m.seller, m.shift
            )));
        }
    }
    let levels: Vec<f64> = config.quantile_levels.iter().map(|q| q.get()).collect();
    let task = MarketTask::new("synthetic", &levels, 1)?;
    let ids: Vec<String> = (0..n).map(|i| format!("seller{}", i + 1)).collect();
    let id_refs: Vec<&str> = ids.iter().map(String::as_str).collect();
    let mut market = Market::new(task, &id_refs, engine, allocation, config.seed)?.without_ledger();
    let header = market.header();
    let path = WeightPath::new(config);

    let mut rewards = Vec::with_capacity(config.horizon * n);
    let mut records = Vec::new();
    for t in 0..config.horizon {
        let mut rng = derive_rng(config.seed, run as u64, t as u64);
        let sample = gen_round(config, path.at(t), &mut rng);
        let t = t as u64;
        market.open_session(t)?;
        for i in sample.alpha.available() {
            let mut values = sample.submissions[i].clone();
            if let Some(m) = misreport.filter(|m| m.seller == i) {
                values.iter_mut().for_each(|v| *v += m.shift);
            }
            market.submit_forecast(t, &ids[i], &values)?;
        }
        market.close_and_aggregate(t)?;
        let record = market.settle_session(t, sample.y, utility)?;
        rewards.extend_from_slice(&record.totals);
        if keep_records {
            records.push(record);
        }
    }
    Ok(MarketSimulation {
        header,
        rewards,
        final_state: market.state(),
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::combination::QuantileLevel;

    fn config() -> ScenarioConfig {
        ScenarioConfig {
            horizon: 300,
            runs: 1,
            missing_rate: 0.1,
            quantile_levels: [0.1, 0.5, 0.9]
                .iter()
                .map(|&t| QuantileLevel::new(t).unwrap())
                .collect(),
            ..ScenarioConfig::time_invariant()
        }
    }

    #[test]
    fn budget_balances_every_step() {
        let sim = simulate_market(
            &config(),
            0,
            EngineConfig::default(),
            AllocationConfig::default(),
            2.0,
            None,
            true,
        )
        .unwrap();
        assert_eq!(sim.records.len(), 300);
        for row in sim.rewards.chunks(3) {
            let total: f64 = row.iter().sum();
            assert!((total - 2.0).abs() < 1e-12);
            assert!(row.iter().all(|&r| r >= 0.0));
        }
    }

    #[test]
    fn zero_shift_equals_truthful() {
        let c = config();
        let truthful = simulate_market(
            &c,
            0,
            EngineConfig::default(),
            AllocationConfig::default(),
            1.0,
            None,
            false,
        )
        .unwrap();
        let shifted = simulate_market(
            &c,
            0,
            EngineConfig::default(),
            AllocationConfig::default(),
            1.0,
            Some(Misreport {
                seller: 1,
                shift: 0.0,
            }),
            false,
        )
        .unwrap();
        assert_eq!(truthful, shifted);
    }

    #[test]
    fn bad_misreport_rejected() {
        let err = simulate_market(
            &config(),
            0,
            EngineConfig::default(),
            AllocationConfig::default(),
            1.0,
            Some(Misreport {
                seller: 5,
                shift: 1.0,
            }),
            false,
        );
        assert!(err.is_err());
    }
}
