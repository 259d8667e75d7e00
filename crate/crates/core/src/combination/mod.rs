//! Online quantile regression over seller forecasts, plain (QR) and robust to
//! missing inputs (RQR).

mod loss;
mod model;
mod simplex;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use loss::{loss_subgradient_pred, quantile_loss};
pub use model::{
    AvailabilityMask, EffectiveWeights, QuantileModel, UpdateOutcome, DEFAULT_LEARNING_RATE,
};
pub use simplex::project_to_simplex;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CombinationError {
    #[error("empty input")]
    EmptyInput,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(
        "plain combination needs every forecast; use the robust model when sellers are missing"
    )]
    MissingInputs,
    #[error("quantile level must lie in (0, 1), got {0}")]
    InvalidLevel(f64),
    #[error("learning rate must be positive and finite, got {0}")]
    InvalidLearningRate(f64),
    #[error("weights are not on the probability simplex")]
    NotOnSimplex,
    #[error("availability flag must be 0 or 1, got {0}")]
    InvalidFlag(u8),
}

/// Nominal level `tau` of a quantile forecast, strictly inside (0, 1).
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct QuantileLevel(f64);

impl QuantileLevel {
    pub fn new(tau: f64) -> Result<Self, CombinationError> {
        if tau > 0.0 && tau < 1.0 {
            Ok(Self(tau))
        } else {
            Err(CombinationError::InvalidLevel(tau))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for QuantileLevel {
    type Error = CombinationError;

    fn try_from(tau: f64) -> Result<Self, Self::Error> {
        Self::new(tau)
    }
}

impl From<QuantileLevel> for f64 {
    fn from(tau: QuantileLevel) -> Self {
        tau.0
    }
}

impl fmt::Display for QuantileLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Sums after sorting, which makes the result independent of term order.
pub(crate) fn ordered_sum(terms: &mut [f64]) -> f64 {
    terms.sort_unstable_by(f64::total_cmp);
    terms.iter().sum()
}
