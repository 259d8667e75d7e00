//! Pay-off allocation: in-sample shares from recursively smoothed Shapley
//! values, out-of-sample shares from a pinball-loss score, and the monetary
//! settlement that combines them.

mod rewards;
mod shapley;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::combination::CombinationError;

pub use rewards::{
    in_sample_rewards, oos_rewards, oos_scores, settle_rewards, LevelReward, LevelShares,
    RewardBreakdown, Shares,
};
pub use shapley::{
    coalition_value, shapley_exact, shapley_over_orderings, shapley_sampled, SampledShapley,
    ShapleyState, EXACT_SELLER_LIMIT,
};

pub const DEFAULT_DELTA: f64 = 0.5;
pub const DEFAULT_LAMBDA: f64 = 0.99;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AllocationError {
    #[error(transparent)]
    Combination(#[from] CombinationError),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("coalition contains a seller that is missing this round")]
    CoalitionNotAvailable,
    #[error("{players} available sellers exceed the exact Shapley limit of {limit}; use permutation sampling")]
    TooManyPlayers { players: usize, limit: usize },
    #[error("permutation sampling needs at least one permutation")]
    NoPermutations,
    #[error("utility must be non-negative and finite, got {0}")]
    NegativeUtility(f64),
    #[error("in-sample fraction delta must lie in [0, 1], got {0}")]
    InvalidDelta(f64),
    #[error("forgetting factor lambda must lie in [0, 1), got {0}")]
    InvalidLambda(f64),
    #[error("settlement needs at least one quantile level")]
    NoLevels,
}

/// How per-round Shapley values are computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
#[derive(Default)]
pub enum ShapleyMethod {
    #[default]
    Exact,
    PermutationSampling { permutations: usize },
}


#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AllocationConfig {
    /// Fraction of each level's utility paid on in-sample shares.
    pub delta: f64,
    /// Forgetting factor of the recursive Shapley values.
    pub lambda: f64,
    pub shapley: ShapleyMethod,
}

impl Default for AllocationConfig {
    fn default() -> Self {
        Self {
            delta: DEFAULT_DELTA,
            lambda: DEFAULT_LAMBDA,
            shapley: ShapleyMethod::Exact,
        }
    }
}

impl AllocationConfig {
    pub fn validate(&self) -> Result<(), AllocationError> {
        check_delta(self.delta)?;
        check_lambda(self.lambda)?;
        if let ShapleyMethod::PermutationSampling { permutations: 0 } = self.shapley {
            return Err(AllocationError::NoPermutations);
        }
        Ok(())
    }
}

pub(crate) fn check_delta(delta: f64) -> Result<(), AllocationError> {
    if (0.0..=1.0).contains(&delta) {
        Ok(())
    } else {
        Err(AllocationError::InvalidDelta(delta))
    }
}

pub(crate) fn check_lambda(lambda: f64) -> Result<(), AllocationError> {
    if (0.0..1.0).contains(&lambda) {
        Ok(())
    } else {
        Err(AllocationError::InvalidLambda(lambda))
    }
}
