use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ScenarioConfig;
use super::generator::{gen_round, WeightPath};
use super::impute::{impute_last, impute_mean, SubmissionHistory};
use super::ScenarioError;
use crate::combination::{AvailabilityMask, QuantileLevel, QuantileModel};
use crate::rng::derive_rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Plain QR with missing forecasts entered as zero.
    Qr,
    Rqr,
    MeanImpute,
    LastImpute,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Qr,
        Method::Rqr,
        Method::MeanImpute,
        Method::LastImpute,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Qr => "qr",
            Method::Rqr => "rqr",
            Method::MeanImpute => "mean-impute",
            Method::LastImpute => "last-impute",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                format!("unknown method `{s}` (expected qr, rqr, mean-impute or last-impute)")
            })
    }
}

/// Weight estimation error at one quantile level, per seller.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightErrorStats {
    pub tau: QuantileLevel,
    /// Run average of the post-burn-in mean of `w_est - w_true`.
    pub bias: Vec<f64>,
    /// Across-run standard deviation of the per-run bias.
    pub bias_sd: Vec<f64>,
    /// Run average of the post-burn-in temporal variance of `w_est`.
    pub var: Vec<f64>,
    pub var_sd: Vec<f64>,
}

impl WeightErrorStats {
    pub fn mean_abs_bias(&self) -> f64 {
        self.bias.iter().map(|b| b.abs()).sum::<f64>() / self.bias.len() as f64
    }

    pub fn mean_var(&self) -> f64 {
        self.var.iter().sum::<f64>() / self.var.len() as f64
    }
}

/// Per-step record of one run, row-major `horizon x n`.
#[derive(Clone, Debug, PartialEq)]
pub struct RunTrajectory {
    pub run: usize,
    pub w_true: Vec<f64>,
    pub alpha: Vec<bool>,
    /// Estimated weights after each step's update, one vector per level.
    pub w_est: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MonteCarloResult {
    pub method: Method,
    pub missing_rate: f64,
    pub stats: Vec<WeightErrorStats>,
    pub trajectories: Vec<RunTrajectory>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepEntry {
    pub missing_rate: f64,
    pub stats: Vec<WeightErrorStats>,
}

struct RunSummary {
    bias: Vec<Vec<f64>>,
    var: Vec<Vec<f64>>,
    trajectory: Option<RunTrajectory>,
}

pub fn run_monte_carlo(
    config: &ScenarioConfig,
    method: Method,
) -> Result<MonteCarloResult, ScenarioError> {
    let (stats, trajectories) = monte_carlo(config, method, true)?;
    Ok(MonteCarloResult {
        method,
        missing_rate: config.missing_rate,
        stats,
        trajectories,
    })
}

/// Weight error statistics of `method` at each missingness rate.
pub fn missingness_sweep(
    config: &ScenarioConfig,
    method: Method,
    rates: &[f64],
) -> Result<Vec<SweepEntry>, ScenarioError> {
    rates
        .iter()
        .map(|&missing_rate| {
            let config = ScenarioConfig {
                missing_rate,
                ..config.clone()
            };
            let (stats, _) = monte_carlo(&config, method, false)?;
            Ok(SweepEntry {
                missing_rate,
                stats,
            })
        })
        .collect()
}

fn monte_carlo(
    config: &ScenarioConfig,
    method: Method,
    keep: bool,
) -> Result<(Vec<WeightErrorStats>, Vec<RunTrajectory>), ScenarioError> {
    config.validate()?;
    let path = WeightPath::new(config);
    let runs: Vec<RunSummary> = (0..config.runs)
        .into_par_iter()
        .map(|run| simulate_run(config, &path, method, run, keep))
        .collect::<Result<_, _>>()?;

    let n = config.n();
    let stats = config
        .quantile_levels
        .iter()
        .enumerate()
        .map(|(q, &tau)| {
            let mut stats = WeightErrorStats {
                tau,
                bias: vec![0.0; n],
                bias_sd: vec![0.0; n],
                var: vec![0.0; n],
                var_sd: vec![0.0; n],
            };
            for i in 0..n {
                let biases: Vec<f64> = runs.iter().map(|r| r.bias[q][i]).collect();
                let vars: Vec<f64> = runs.iter().map(|r| r.var[q][i]).collect();
                (stats.bias[i], stats.bias_sd[i]) = mean_and_sd(&biases);
                (stats.var[i], stats.var_sd[i]) = mean_and_sd(&vars);
            }
            stats
        })
        .collect();
    let trajectories = runs.into_iter().filter_map(|r| r.trajectory).collect();
    Ok((stats, trajectories))
}

fn simulate_run(
    config: &ScenarioConfig,
    path: &WeightPath,
    method: Method,
    run: usize,
    keep: bool,
) -> Result<RunSummary, ScenarioError> {
    let n = config.n();
    let levels = config.quantile_levels.len();
    let horizon = config.horizon;
    let burn_in = config.effective_burn_in();
    let evaluated = (horizon - burn_in) as f64;

    let mut models: Vec<QuantileModel> = config
        .quantile_levels
        .iter()
        .map(|&tau| QuantileModel::new(tau, n, config.learning_rate))
        .collect::<Result<_, _>>()?;
    let mut histories = vec![SubmissionHistory::new(n); levels];
    let present = AvailabilityMask::all_present(n);

    // Running sums for the post-burn-in error and the weight variance.
    let mut err_sum = vec![vec![0.0; n]; levels];
    let mut w_sum = vec![vec![0.0; n]; levels];
    let mut w_sq_sum = vec![vec![0.0; n]; levels];

    let mut trajectory = keep.then(|| RunTrajectory {
        run,
        w_true: Vec::with_capacity(horizon * n),
        alpha: Vec::with_capacity(horizon * n),
        w_est: vec![Vec::with_capacity(horizon * n); levels],
    });

    for t in 0..horizon {
        let mut rng = derive_rng(config.seed, run as u64, t as u64);
        let sample = gen_round(config, path.at(t), &mut rng);
        let alpha = &sample.alpha;
        for (q, model) in models.iter_mut().enumerate() {
            let x = sample.level(q);
            match method {
                Method::Rqr => {
                    model.rqr_update(&x, alpha, sample.y)?;
                }
                Method::Qr => {
                    model.qr_update(&alpha.apply(&x), &present, sample.y)?;
                }
                Method::MeanImpute | Method::LastImpute => {
                    let filled = if method == Method::MeanImpute {
                        impute_mean(&histories[q], &x, alpha)
                    } else {
                        impute_last(&histories[q], &x, alpha)
                    };
                    histories[q].observe(&x, alpha);
                    model.qr_update(&filled.values, &present, sample.y)?;
                }
            }
            if t >= burn_in {
                for (i, (&w, &truth)) in
                    model.weights().iter().zip(&sample.true_weights).enumerate()
                {
                    err_sum[q][i] += w - truth;
                    w_sum[q][i] += w;
                    w_sq_sum[q][i] += w * w;
                }
            }
            if let Some(tr) = trajectory.as_mut() {
                tr.w_est[q].extend_from_slice(model.weights());
            }
        }
        if let Some(tr) = trajectory.as_mut() {
            tr.w_true.extend_from_slice(&sample.true_weights);
            tr.alpha.extend_from_slice(alpha.as_slice());
        }
    }

    let bias = err_sum
        .iter()
        .map(|row| row.iter().map(|e| e / evaluated).collect())
        .collect();
    let var = w_sum
        .iter()
        .zip(&w_sq_sum)
        .map(|(s, sq)| {
            s.iter()
                .zip(sq)
                .map(|(&s, &sq)| {
                    if evaluated < 2.0 {
                        return 0.0;
                    }
                    ((sq - s * s / evaluated) / (evaluated - 1.0)).max(0.0)
                })
                .collect()
        })
        .collect();
    Ok(RunSummary {
        bias,
        var,
        trajectory,
    })
}

/// Mean and sample standard deviation; the deviation of one value is 0.
fn mean_and_sd(values: &[f64]) -> (f64, f64) {
    let count = values.len() as f64;
    let mean = values.iter().sum::<f64>() / count;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (mean, (ss / (count - 1.0)).sqrt())
}
