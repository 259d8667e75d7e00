//! Synthetic sellers, availability processes and Monte Carlo evaluation of
//! the combination engines.

mod config;
mod generator;
mod impute;
mod market_sim;
mod missing;
mod monte_carlo;
mod normal;

use thiserror::Error;

use crate::combination::CombinationError;
use crate::market::MarketError;

pub use config::{ScenarioConfig, SellerSpec, WeightSchedule, DEFAULT_SEED};
pub use generator::{gen_round, gen_time_invariant, gen_time_varying, RoundSample, WeightPath};
pub use impute::{impute_last, impute_mean, Imputed, SubmissionHistory};
pub use market_sim::{simulate_market, MarketSimulation, Misreport};
pub use missing::gen_missingness;
pub use monte_carlo::{
    missingness_sweep, run_monte_carlo, Method, MonteCarloResult, RunTrajectory, SweepEntry,
    WeightErrorStats,
};
pub use normal::standard_normal_quantile;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Combination(#[from] CombinationError),
    #[error(transparent)]
    Market(#[from] MarketError),
}
