use serde::{Deserialize, Serialize};

use super::AllocationError;
use crate::combination::{quantile_loss, AvailabilityMask, QuantileLevel};

/// Normalized shares plus a flag for rounds where nobody was available.
#[derive(Clone, Debug, PartialEq)]
pub struct Shares {
    pub shares: Vec<f64>,
    pub degenerate: bool,
}

/// In-sample shares from the recursive Shapley values of available sellers.
///
/// Negative values are clipped at zero. When no available seller has a
/// positive value the share is split equally among the available sellers.
pub fn in_sample_rewards(
    phi_c: &[f64],
    alpha: &AvailabilityMask,
) -> Result<Shares, AllocationError> {
    check_len(phi_c.len(), alpha)?;
    let n_avail = alpha.available_count();
    let mut shares = vec![0.0; phi_c.len()];
    if n_avail == 0 {
        return Ok(Shares {
            shares,
            degenerate: true,
        });
    }
    let denom: f64 = alpha.available().map(|i| phi_c[i].max(0.0)).sum();
    if denom > 0.0 {
        for i in alpha.available() {
            shares[i] = phi_c[i].max(0.0) / denom;
        }
    } else {
        let equal = 1.0 / n_avail as f64;
        for i in alpha.available() {
            shares[i] = equal;
        }
    }
    Ok(Shares {
        shares,
        degenerate: false,
    })
}

/// Scores `1 - L_i / sum_j L_j` over available sellers, 0 for missing ones.
///
/// A lone available seller scores 1, and if every available loss is zero
/// each available seller scores `1 / n_avail`.
pub fn oos_scores(
    tau: QuantileLevel,
    y: f64,
    x_hat: &[f64],
    alpha: &AvailabilityMask,
) -> Result<Vec<f64>, AllocationError> {
    check_len(x_hat.len(), alpha)?;
    let n_avail = alpha.available_count();
    let mut scores = vec![0.0; x_hat.len()];
    if n_avail == 0 {
        return Ok(scores);
    }
    if n_avail == 1 {
        for i in alpha.available() {
            scores[i] = 1.0;
        }
        return Ok(scores);
    }
    let losses: Vec<f64> = x_hat.iter().map(|&x| quantile_loss(tau, y, x)).collect();
    let total: f64 = alpha.available().map(|i| losses[i]).sum();
    if total > 0.0 {
        for i in alpha.available() {
            // clamp guards the last-bit rounding of L_i / total above 1
            scores[i] = (1.0 - losses[i] / total).clamp(0.0, 1.0);
        }
    } else {
        let equal = 1.0 / n_avail as f64;
        for i in alpha.available() {
            scores[i] = equal;
        }
    }
    Ok(scores)
}

/// Out-of-sample shares: scores normalized over available sellers.
pub fn oos_rewards(scores: &[f64], alpha: &AvailabilityMask) -> Result<Shares, AllocationError> {
    check_len(scores.len(), alpha)?;
    let mut shares = vec![0.0; scores.len()];
    let denom: f64 = alpha.available().map(|i| scores[i]).sum();
    if denom <= 0.0 {
        return Ok(Shares {
            shares,
            degenerate: true,
        });
    }
    for i in alpha.available() {
        shares[i] = scores[i] / denom;
    }
    Ok(Shares {
        shares,
        degenerate: false,
    })
}

/// Share vectors of one model instance going into a settlement.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelShares {
    pub in_sample: Vec<f64>,
    pub out_of_sample: Vec<f64>,
}

/// Monetary split for one quantile level (or level/horizon instance).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelReward {
    pub utility: f64,
    pub r_is: Vec<f64>,
    pub r_oos: Vec<f64>,
    /// `utility * delta * r_is`
    pub reward_is: Vec<f64>,
    /// `utility * (1 - delta) * r_oos`
    pub reward_oos: Vec<f64>,
    pub reward: Vec<f64>,
}

/// Money paid out in one settlement, per level and per seller.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub utility: f64,
    pub levels: Vec<LevelReward>,
    pub totals: Vec<f64>,
}

impl RewardBreakdown {
    pub fn in_sample_totals(&self) -> Vec<f64> {
        sum_columns(self.levels.iter().map(|l| &l.reward_is), self.totals.len())
    }

    pub fn out_of_sample_totals(&self) -> Vec<f64> {
        sum_columns(self.levels.iter().map(|l| &l.reward_oos), self.totals.len())
    }
}

fn sum_columns<'a>(rows: impl Iterator<Item = &'a Vec<f64>>, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for row in rows {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    out
}

/// Splits `utility` equally over the levels, then each level's amount
/// between in-sample (`delta`) and out-of-sample (`1 - delta`) shares.
pub fn settle_rewards(
    utility: f64,
    delta: f64,
    levels: &[LevelShares],
) -> Result<RewardBreakdown, AllocationError> {
    if !(utility.is_finite() && utility >= 0.0) {
        return Err(AllocationError::NegativeUtility(utility));
    }
    super::check_delta(delta)?;
    if levels.is_empty() {
        return Err(AllocationError::NoLevels);
    }
    let n = levels[0].in_sample.len();
    if levels
        .iter()
        .any(|l| l.in_sample.len() != n || l.out_of_sample.len() != n)
    {
        return Err(AllocationError::DimensionMismatch {
            expected: n,
            got: levels.iter().map(|l| l.in_sample.len()).max().unwrap_or(0),
        });
    }

    let per_level = utility / levels.len() as f64;
    let levels: Vec<LevelReward> = levels
        .iter()
        .map(|shares| {
            let reward_is: Vec<f64> = shares
                .in_sample
                .iter()
                .map(|r| per_level * delta * r)
                .collect();
            let reward_oos: Vec<f64> = shares
                .out_of_sample
                .iter()
                .map(|r| per_level * (1.0 - delta) * r)
                .collect();
            let reward = shares
                .in_sample
                .iter()
                .zip(&shares.out_of_sample)
                .map(|(is, oos)| per_level * (delta * is + (1.0 - delta) * oos))
                .collect();
            LevelReward {
                utility: per_level,
                r_is: shares.in_sample.clone(),
                r_oos: shares.out_of_sample.clone(),
                reward_is,
                reward_oos,
                reward,
            }
        })
        .collect();
    let totals = sum_columns(levels.iter().map(|l| &l.reward), n);
    Ok(RewardBreakdown {
        utility,
        levels,
        totals,
    })
}

fn check_len(len: usize, alpha: &AvailabilityMask) -> Result<(), AllocationError> {
    if len != alpha.len() {
        return Err(AllocationError::DimensionMismatch {
            expected: alpha.len(),
            got: len,
        });
    }
    Ok(())
}
