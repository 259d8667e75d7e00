use crate::combination::AvailabilityMask;

/// Running statistics of each seller's observed submissions at one level.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SubmissionHistory {
    sums: Vec<f64>,
    counts: Vec<usize>,
    last: Vec<Option<f64>>,
}

impl SubmissionHistory {
    pub fn new(n: usize) -> Self {
        Self {
            sums: vec![0.0; n],
            counts: vec![0; n],
            last: vec![None; n],
        }
    }

    /// Records the entries of `x_hat` that `alpha` marks present.
    pub fn observe(&mut self, x_hat: &[f64], alpha: &AvailabilityMask) {
        for i in alpha.available() {
            self.sums[i] += x_hat[i];
            self.counts[i] += 1;
            self.last[i] = Some(x_hat[i]);
        }
    }

    pub fn mean(&self, i: usize) -> Option<f64> {
        (self.counts[i] > 0).then(|| self.sums[i] / self.counts[i] as f64)
    }

    pub fn last(&self, i: usize) -> Option<f64> {
        self.last[i]
    }
}

/// Submission vector with missing entries filled in.
#[derive(Clone, Debug, PartialEq)]
pub struct Imputed {
    pub values: Vec<f64>,
    /// Sellers that were missing with no history and were filled with 0.
    pub flagged: Vec<bool>,
}

fn impute_with(
    x_hat: &[f64],
    alpha: &AvailabilityMask,
    fill: impl Fn(usize) -> Option<f64>,
) -> Imputed {
    let mut flagged = vec![false; x_hat.len()];
    let values = x_hat
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            if !alpha.is_missing(i) {
                return x;
            }
            fill(i).unwrap_or_else(|| {
                flagged[i] = true;
                0.0
            })
        })
        .collect();
    Imputed { values, flagged }
}

pub fn impute_mean(
    history: &SubmissionHistory,
    x_hat: &[f64],
    alpha: &AvailabilityMask,
) -> Imputed {
    impute_with(x_hat, alpha, |i| history.mean(i))
}

pub fn impute_last(
    history: &SubmissionHistory,
    x_hat: &[f64],
    alpha: &AvailabilityMask,
) -> Imputed {
    impute_with(x_hat, alpha, |i| history.last(i))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nothing_missing_is_identity() {
        let history = SubmissionHistory::new(2);
        let alpha = AvailabilityMask::all_present(2);
        let x = [1.5, -2.0];
        assert_eq!(impute_mean(&history, &x, &alpha).values, x);
        assert_eq!(impute_last(&history, &x, &alpha).values, x);
    }

    #[test]
    fn mean_and_last_value() {
        let mut history = SubmissionHistory::new(1);
        let present = AvailabilityMask::all_present(1);
        for v in [1.0, 2.0, 3.0] {
            history.observe(&[v], &present);
        }
        let missing = AvailabilityMask::all_missing(1);
        assert_eq!(impute_mean(&history, &[9.0], &missing).values, [2.0]);
        assert_eq!(impute_last(&history, &[9.0], &missing).values, [3.0]);
    }

    #[test]
    fn empty_history_fills_zero_and_flags() {
        let history = SubmissionHistory::new(2);
        let alpha = AvailabilityMask::from_missing(vec![true, false]);
        let out = impute_last(&history, &[4.0, 5.0], &alpha);
        assert_eq!(out.values, [0.0, 5.0]);
        assert_eq!(out.flagged, [true, false]);
    }
}
