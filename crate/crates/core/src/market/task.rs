use serde::{Deserialize, Serialize};

use super::MarketError;
use crate::combination::QuantileLevel;

/// A forecasting task posted by the client.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarketTask {
    pub task_id: String,
    #[serde(default)]
    pub description: String,
    /// Strictly increasing nominal levels.
    pub quantile_levels: Vec<QuantileLevel>,
    /// Number of lead-time steps; each gets its own model per level.
    pub horizon_steps: usize,
    /// Informational deadline label; sessions close when the operator closes them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub submission_deadline: Option<String>,
}

impl MarketTask {
    pub fn new(
        task_id: impl Into<String>,
        levels: &[f64],
        horizon_steps: usize,
    ) -> Result<Self, MarketError> {
        let quantile_levels = levels
            .iter()
            .map(|&tau| {
                QuantileLevel::new(tau).map_err(|e| MarketError::InvalidTask(e.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let task = Self {
            task_id: task_id.into(),
            description: String::new(),
            quantile_levels,
            horizon_steps,
            submission_deadline: None,
        };
        task.validate()?;
        Ok(task)
    }

    pub fn validate(&self) -> Result<(), MarketError> {
        if self.quantile_levels.is_empty() {
            return Err(MarketError::InvalidTask(
                "at least one quantile level is required".into(),
            ));
        }
        if self.quantile_levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(MarketError::InvalidTask(
                "quantile levels must be strictly increasing".into(),
            ));
        }
        if self.horizon_steps == 0 {
            return Err(MarketError::InvalidTask(
                "horizon_steps must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Values each seller submits per session: `m * k`, laid out horizon-major
    /// (`values[h * m + q]`).
    pub fn values_per_seller(&self) -> usize {
        self.quantile_levels.len() * self.horizon_steps
    }

    /// `(level, horizon)` of every model instance, in submission layout order.
    pub fn instances(&self) -> impl Iterator<Item = (QuantileLevel, usize)> + '_ {
        (0..self.horizon_steps).flat_map(move |h| self.quantile_levels.iter().map(move |&q| (q, h)))
    }
}
