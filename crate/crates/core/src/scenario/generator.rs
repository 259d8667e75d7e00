use rand::Rng;
use rand_distr::StandardNormal;

use super::config::{ScenarioConfig, WeightSchedule};
use super::missing::gen_missingness;
use super::normal::standard_normal_quantile;
use super::ScenarioError;
use crate::combination::AvailabilityMask;

/// One synthetic round.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundSample {
    /// `submissions[i][q]`: seller `i`'s forecast at quantile level `q`.
    pub submissions: Vec<Vec<f64>>,
    pub y: f64,
    pub alpha: AvailabilityMask,
    pub true_weights: Vec<f64>,
    /// Per-seller location `mu_i` behind the submissions.
    pub means: Vec<f64>,
}

impl RoundSample {
    /// Column of submissions at quantile level index `q`.
    pub fn level(&self, q: usize) -> Vec<f64> {
        self.submissions.iter().map(|s| s[q]).collect()
    }
}

/// True weights for every step of a horizon, row-major `horizon x n`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightPath {
    n: usize,
    weights: Vec<f64>,
}

impl WeightPath {
    pub fn new(config: &ScenarioConfig) -> Self {
        let n = config.n();
        let mut weights = Vec::with_capacity(config.horizon * n);
        match &config.weights {
            WeightSchedule::Static { weights: w } => {
                for _ in 0..config.horizon {
                    weights.extend_from_slice(w);
                }
            }
            WeightSchedule::Periodic {
                start,
                end,
                period,
                smoothing,
            } => {
                let target = |t: usize| -> Vec<f64> {
                    let beta = 0.5 * (1.0 + (2.0 * std::f64::consts::PI * t as f64 / period).sin());
                    start
                        .iter()
                        .zip(end)
                        .map(|(a, b)| (1.0 - beta) * a + beta * b)
                        .collect()
                };
                // Seeded with the first target so that w_0 = target_0.
                let mut current = target(0);
                for t in 0..config.horizon {
                    let goal = target(t);
                    for (c, g) in current.iter_mut().zip(&goal) {
                        *c = smoothing * *c + (1.0 - smoothing) * g;
                    }
                    weights.extend_from_slice(&current);
                }
            }
        }
        Self { n, weights }
    }

    pub fn at(&self, t: usize) -> &[f64] {
        &self.weights[t * self.n..(t + 1) * self.n]
    }

    pub fn len(&self) -> usize {
        self.weights.len() / self.n.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Draws one round: seller locations, quantile submissions, the realization
/// and the availability mask, in that order from `rng`.
pub fn gen_round<R: Rng + ?Sized>(
    config: &ScenarioConfig,
    weights: &[f64],
    rng: &mut R,
) -> RoundSample {
    let z: Vec<f64> = config
        .quantile_levels
        .iter()
        .map(|tau| standard_normal_quantile(tau.get()))
        .collect();
    let means: Vec<f64> = config
        .sellers
        .iter()
        .map(|s| {
            let eps: f64 = rng.sample(StandardNormal);
            s.c + s.nu * eps
        })
        .collect();
    let submissions = config
        .sellers
        .iter()
        .zip(&means)
        .map(|(s, mu)| z.iter().map(|zq| mu + s.sigma * zq).collect())
        .collect();
    let location: f64 = weights.iter().zip(&means).map(|(w, mu)| w * mu).sum();
    let spread: f64 = weights
        .iter()
        .zip(&config.sellers)
        .map(|(w, s)| w * s.sigma)
        .sum();
    let noise: f64 = rng.sample(StandardNormal);
    let y = location + spread * noise;
    let alpha = gen_missingness(config.missing_rate, config.n(), rng);
    RoundSample {
        submissions,
        y,
        alpha,
        true_weights: weights.to_vec(),
        means,
    }
}

pub fn gen_time_invariant<R: Rng + ?Sized>(
    config: &ScenarioConfig,
    rng: &mut R,
    _t: usize,
) -> Result<RoundSample, ScenarioError> {
    match &config.weights {
        WeightSchedule::Static { weights } => Ok(gen_round(config, weights, rng)),
        WeightSchedule::Periodic { .. } => Err(ScenarioError::InvalidConfig(
            "time-invariant generator needs static weights".into(),
        )),
    }
}

pub fn gen_time_varying<R: Rng + ?Sized>(
    config: &ScenarioConfig,
    path: &WeightPath,
    rng: &mut R,
    t: usize,
) -> Result<RoundSample, ScenarioError> {
    match &config.weights {
        WeightSchedule::Periodic { .. } if t < path.len() => Ok(gen_round(config, path.at(t), rng)),
        WeightSchedule::Periodic { .. } => Err(ScenarioError::InvalidConfig(format!(
            "step {t} is beyond the horizon {}",
            path.len()
        ))),
        WeightSchedule::Static { .. } => Err(ScenarioError::InvalidConfig(
            "time-varying generator needs a periodic schedule".into(),
        )),
    }
}
