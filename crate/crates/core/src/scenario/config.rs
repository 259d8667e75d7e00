use serde::{Deserialize, Serialize};

use super::ScenarioError;
use crate::combination::{QuantileLevel, DEFAULT_LEARNING_RATE};

/// A synthetic seller: mean `c + nu * eps_t` with `eps_t ~ N(0, 1)`, spread `sigma`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SellerSpec {
    pub c: f64,
    pub nu: f64,
    pub sigma: f64,
}

/// True combination weights over time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum WeightSchedule {
    Static {
        weights: Vec<f64>,
    },
    /// Sine blend between two endpoints with exponential smoothing:
    /// `beta_t = (1 + sin(2 pi t / period)) / 2`,
    /// `target_t = (1 - beta_t) start + beta_t end`,
    /// `w_t = smoothing * w_{t-1} + (1 - smoothing) * target_t`.
    Periodic {
        start: Vec<f64>,
        end: Vec<f64>,
        period: f64,
        smoothing: f64,
    },
}

impl WeightSchedule {
    pub fn len(&self) -> usize {
        match self {
            WeightSchedule::Static { weights } => weights.len(),
            WeightSchedule::Periodic { start, .. } => start.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub sellers: Vec<SellerSpec>,
    pub weights: WeightSchedule,
    /// Steps per run.
    pub horizon: usize,
    pub runs: usize,
    /// Independent per-seller probability of a missing submission.
    pub missing_rate: f64,
    pub quantile_levels: Vec<QuantileLevel>,
    pub seed: u64,
    /// Leading steps excluded from the weight error statistics.
    pub burn_in: usize,
    /// Step size of the online combiners.
    pub learning_rate: f64,
}

pub const DEFAULT_SEED: u64 = 20_250_701;

impl ScenarioConfig {
    /// Three sellers with offsets 0, 1, 2, mean noise 0.5, unit spread and
    /// true weights `[0.1, 0.6, 0.3]`.
    pub fn time_invariant() -> Self {
        Self {
            sellers: default_sellers(),
            weights: WeightSchedule::Static {
                weights: vec![0.1, 0.6, 0.3],
            },
            horizon: 20_000,
            runs: 20,
            missing_rate: 0.0,
            quantile_levels: vec![QuantileLevel::new(0.5).expect("valid level")],
            seed: DEFAULT_SEED,
            burn_in: 5_000,
            learning_rate: DEFAULT_LEARNING_RATE,
        }
    }

    /// Same sellers; weights oscillate once over the horizon.
    pub fn time_varying() -> Self {
        let base = Self::time_invariant();
        Self {
            weights: WeightSchedule::Periodic {
                start: vec![0.7, 0.2, 0.1],
                end: vec![0.1, 0.4, 0.5],
                period: base.horizon as f64,
                smoothing: 0.999,
            },
            ..base
        }
    }

    pub fn n(&self) -> usize {
        self.sellers.len()
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let invalid = |msg: String| Err(ScenarioError::InvalidConfig(msg));
        if self.sellers.is_empty() {
            return invalid("at least one seller is required".into());
        }
        if let Some(s) = self
            .sellers
            .iter()
            .find(|s| !(s.sigma > 0.0 && s.sigma.is_finite()))
        {
            return invalid(format!("seller sigma must be positive, got {}", s.sigma));
        }
        if self
            .sellers
            .iter()
            .any(|s| !s.c.is_finite() || !s.nu.is_finite())
        {
            return invalid("seller parameters must be finite".into());
        }
        if self.weights.len() != self.n() {
            return invalid(format!(
                "weight vector has {} entries for {} sellers",
                self.weights.len(),
                self.n()
            ));
        }
        match &self.weights {
            WeightSchedule::Static { weights } => check_simplex("weights", weights)?,
            WeightSchedule::Periodic {
                start,
                end,
                period,
                smoothing,
            } => {
                check_simplex("start weights", start)?;
                check_simplex("end weights", end)?;
                if start.len() != end.len() {
                    return invalid("start and end weights differ in length".into());
                }
                if !(*period > 0.0 && period.is_finite()) {
                    return invalid(format!("period must be positive, got {period}"));
                }
                if !(0.0..1.0).contains(smoothing) {
                    return invalid(format!("smoothing must lie in [0, 1), got {smoothing}"));
                }
            }
        }
        if self.horizon == 0 {
            return invalid("horizon must be at least 1".into());
        }
        if self.runs == 0 {
            return invalid("runs must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return invalid(format!(
                "missing rate must lie in [0, 1), got {}",
                self.missing_rate
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return invalid(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            ));
        }
        if self.quantile_levels.is_empty() {
            return invalid("at least one quantile level is required".into());
        }
        if self.quantile_levels.windows(2).any(|w| w[0] >= w[1]) {
            return invalid("quantile levels must be strictly increasing".into());
        }
        Ok(())
    }

    /// Burn-in actually applied: the configured one, or none if it would
    /// leave no steps to evaluate.
    pub fn effective_burn_in(&self) -> usize {
        if self.burn_in < self.horizon {
            self.burn_in
        } else {
            0
        }
    }
}

fn default_sellers() -> Vec<SellerSpec> {
    [0.0, 1.0, 2.0]
        .into_iter()
        .map(|c| SellerSpec {
            c,
            nu: 0.5,
            sigma: 1.0,
        })
        .collect()
}

fn check_simplex(name: &str, w: &[f64]) -> Result<(), ScenarioError> {
    let sum: f64 = w.iter().sum();
    if w.iter().any(|&x| !(x >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(ScenarioError::InvalidConfig(format!(
            "{name} must be non-negative and sum to 1"
        )));
    }
    Ok(())
}
