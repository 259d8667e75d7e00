use statrs::distribution::{ContinuousCDF, Normal};

/// Inverse CDF of the standard normal distribution.
pub fn standard_normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}
