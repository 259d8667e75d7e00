//! Pinball loss and its subgradient with respect to the prediction.

use super::QuantileLevel;

/// Quantile (pinball) loss of prediction `y_hat` against observation `y`.
pub fn quantile_loss(tau: QuantileLevel, y: f64, y_hat: f64) -> f64 {
    let tau = tau.get();
    if y >= y_hat {
        (y - y_hat) * tau
    } else {
        (y_hat - y) * (1.0 - tau)
    }
}

/// Element of the subdifferential of [`quantile_loss`] in `y_hat`.
///
/// At the kink `y == y_hat` this returns 0, which lies in `[-tau, 1 - tau]`.
pub fn loss_subgradient_pred(tau: QuantileLevel, y: f64, y_hat: f64) -> f64 {
    let tau = tau.get();
    if y > y_hat {
        -tau
    } else if y_hat > y {
        1.0 - tau
    } else {
        0.0
    }
}
