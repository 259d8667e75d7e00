use serde::{Deserialize, Serialize};

use super::loss::loss_subgradient_pred;
use super::simplex::project_to_simplex;
use super::{ordered_sum, CombinationError, QuantileLevel};

/// Learning rate used when none is configured.
pub const DEFAULT_LEARNING_RATE: f64 = 0.05;

/// Which sellers failed to submit in a round. `true` marks a missing forecast.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "Vec<u8>", try_from = "Vec<u8>")]
pub struct AvailabilityMask(Vec<bool>);

impl AvailabilityMask {
    pub fn all_present(n: usize) -> Self {
        Self(vec![false; n])
    }

    pub fn all_missing(n: usize) -> Self {
        Self(vec![true; n])
    }

    pub fn from_missing(missing: Vec<bool>) -> Self {
        Self(missing)
    }

    /// Builds a mask from 0/1 flags; any other value is rejected.
    pub fn from_flags(flags: &[u8]) -> Result<Self, CombinationError> {
        flags
            .iter()
            .map(|&f| match f {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(CombinationError::InvalidFlag(other)),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Self)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_missing(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn missing_count(&self) -> usize {
        self.0.iter().filter(|&&m| m).count()
    }

    pub fn available_count(&self) -> usize {
        self.len() - self.missing_count()
    }

    pub fn any_missing(&self) -> bool {
        self.0.iter().any(|&m| m)
    }

    pub fn all_missing_flag(&self) -> bool {
        self.0.iter().all(|&m| m)
    }

    pub fn available(&self) -> impl Iterator<Item = usize> + '_ {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &m)| !m)
            .map(|(i, _)| i)
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }

    /// Numeric form used in `theta = w + D * alpha`.
    pub fn value(&self, i: usize) -> f64 {
        if self.0[i] {
            1.0
        } else {
            0.0
        }
    }

    /// Forecasts with missing entries replaced by 0.
    pub fn apply(&self, x_hat: &[f64]) -> Vec<f64> {
        x_hat
            .iter()
            .zip(&self.0)
            .map(|(&x, &missing)| if missing { 0.0 } else { x })
            .collect()
    }
}

impl From<AvailabilityMask> for Vec<u8> {
    fn from(mask: AvailabilityMask) -> Self {
        mask.0.into_iter().map(u8::from).collect()
    }
}

impl TryFrom<Vec<u8>> for AvailabilityMask {
    type Error = CombinationError;

    fn try_from(flags: Vec<u8>) -> Result<Self, Self::Error> {
        Self::from_flags(&flags)
    }
}

/// Corrected combination weights `theta = w + D * alpha`. Not projected.
#[derive(Clone, Debug, PartialEq)]
pub struct EffectiveWeights(pub Vec<f64>);

impl EffectiveWeights {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Result of one online step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UpdateOutcome {
    /// Prediction made with the pre-update parameters.
    pub prediction: f64,
    /// Loss subgradient in the prediction.
    pub subgradient: f64,
}

/// Online combination model for one quantile level (and one lead time).
///
/// Holds the simplex weights `w`, the correction matrix `D` (row-major,
/// `D[i][j]` corrects `w[i]` when seller `j` is missing) and the learning rate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantileModel {
    tau: QuantileLevel,
    weights: Vec<f64>,
    correction: Vec<f64>,
    eta: f64,
}

impl QuantileModel {
    /// Uniform weights, zero correction.
    pub fn new(tau: QuantileLevel, n: usize, eta: f64) -> Result<Self, CombinationError> {
        if n == 0 {
            return Err(CombinationError::EmptyInput);
        }
        check_eta(eta)?;
        Ok(Self {
            tau,
            weights: vec![1.0 / n as f64; n],
            correction: vec![0.0; n * n],
            eta,
        })
    }

    /// Restores a model from a snapshot. `weights` must lie on the simplex.
    pub fn from_parts(
        tau: QuantileLevel,
        weights: Vec<f64>,
        correction: Vec<f64>,
        eta: f64,
    ) -> Result<Self, CombinationError> {
        let n = weights.len();
        if n == 0 {
            return Err(CombinationError::EmptyInput);
        }
        check_eta(eta)?;
        if correction.len() != n * n {
            return Err(CombinationError::DimensionMismatch {
                expected: n * n,
                got: correction.len(),
            });
        }
        if weights.iter().chain(&correction).any(|x| !x.is_finite()) {
            return Err(CombinationError::NonFinite("model snapshot"));
        }
        let sum: f64 = weights.iter().sum();
        if weights.iter().any(|&w| w < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(CombinationError::NotOnSimplex);
        }
        Ok(Self {
            tau,
            weights,
            correction,
            eta,
        })
    }

    pub fn tau(&self) -> QuantileLevel {
        self.tau
    }

    pub fn n(&self) -> usize {
        self.weights.len()
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Row-major `n x n` correction matrix.
    pub fn correction(&self) -> &[f64] {
        &self.correction
    }

    pub fn correction_at(&self, i: usize, j: usize) -> f64 {
        self.correction[i * self.n() + j]
    }

    pub fn set_correction_at(&mut self, i: usize, j: usize, value: f64) {
        let n = self.n();
        self.correction[i * n + j] = value;
    }

    fn check_len(&self, len: usize) -> Result<(), CombinationError> {
        if len != self.n() {
            return Err(CombinationError::DimensionMismatch {
                expected: self.n(),
                got: len,
            });
        }
        Ok(())
    }

    fn check_inputs(
        &self,
        x_hat: &[f64],
        alpha: &AvailabilityMask,
    ) -> Result<(), CombinationError> {
        self.check_len(x_hat.len())?;
        self.check_len(alpha.len())?;
        if x_hat
            .iter()
            .zip(alpha.as_slice())
            .any(|(x, &missing)| !missing && !x.is_finite())
        {
            return Err(CombinationError::NonFinite("forecast"));
        }
        Ok(())
    }

    /// Convex combination `sum_i w_i x_i`; every forecast must be present.
    pub fn qr_predict(
        &self,
        x_hat: &[f64],
        alpha: &AvailabilityMask,
    ) -> Result<f64, CombinationError> {
        self.check_inputs(x_hat, alpha)?;
        if alpha.any_missing() {
            return Err(CombinationError::MissingInputs);
        }
        Ok(combine(&self.weights, x_hat))
    }

    /// Projected subgradient step on `w`; `D` is left untouched.
    pub fn qr_update(
        &mut self,
        x_hat: &[f64],
        alpha: &AvailabilityMask,
        y: f64,
    ) -> Result<UpdateOutcome, CombinationError> {
        let prediction = self.qr_predict(x_hat, alpha)?;
        let subgradient = loss_subgradient_pred(self.tau, y, prediction);
        if subgradient != 0.0 {
            self.step_weights(x_hat, subgradient)?;
        }
        Ok(UpdateOutcome {
            prediction,
            subgradient,
        })
    }

    /// `theta = w + D * alpha`.
    pub fn effective_weights(
        &self,
        alpha: &AvailabilityMask,
    ) -> Result<EffectiveWeights, CombinationError> {
        self.check_len(alpha.len())?;
        let n = self.n();
        let missing: Vec<usize> = (0..n).filter(|&j| alpha.is_missing(j)).collect();
        let mut terms = Vec::with_capacity(missing.len() + 1);
        let theta = (0..n)
            .map(|i| {
                if missing.is_empty() {
                    return self.weights[i];
                }
                let row = &self.correction[i * n..(i + 1) * n];
                terms.clear();
                terms.push(self.weights[i]);
                terms.extend(missing.iter().map(|&j| row[j]));
                ordered_sum(&mut terms)
            })
            .collect();
        Ok(EffectiveWeights(theta))
    }

    /// Robust combination `theta(alpha)^T x_hat(alpha)`. Missing sellers
    /// contribute nothing; an all-missing round predicts 0.
    pub fn rqr_predict(
        &self,
        x_hat: &[f64],
        alpha: &AvailabilityMask,
    ) -> Result<f64, CombinationError> {
        self.check_inputs(x_hat, alpha)?;
        let theta = self.effective_weights(alpha)?;
        let masked = alpha.apply(x_hat);
        Ok(combine(theta.as_slice(), &masked))
    }

    /// Online step on both `w` (projected) and `D`.
    ///
    /// Missing sellers get no raw weight gradient, and `D` only moves in the
    /// columns of missing sellers.
    pub fn rqr_update(
        &mut self,
        x_hat: &[f64],
        alpha: &AvailabilityMask,
        y: f64,
    ) -> Result<UpdateOutcome, CombinationError> {
        let prediction = self.rqr_predict(x_hat, alpha)?;
        let subgradient = loss_subgradient_pred(self.tau, y, prediction);
        if subgradient != 0.0 {
            let masked = alpha.apply(x_hat);
            let n = self.n();
            let step = self.eta * subgradient;
            for j in (0..n).filter(|&j| alpha.is_missing(j)) {
                for (i, &x) in masked.iter().enumerate() {
                    self.correction[i * n + j] -= step * x;
                }
            }
            self.step_weights(&masked, subgradient)?;
        }
        Ok(UpdateOutcome {
            prediction,
            subgradient,
        })
    }

    fn step_weights(&mut self, x: &[f64], subgradient: f64) -> Result<(), CombinationError> {
        let step = self.eta * subgradient;
        let raw: Vec<f64> = self
            .weights
            .iter()
            .zip(x)
            .map(|(&w, &x)| w - step * x)
            .collect();
        self.weights = project_to_simplex(&raw)?;
        Ok(())
    }

    /// Appends a seller with zero weight and zero correction rows/columns.
    pub fn add_seller(&mut self) -> Result<(), CombinationError> {
        let n = self.n();
        let mut correction = vec![0.0; (n + 1) * (n + 1)];
        for i in 0..n {
            correction[i * (n + 1)..i * (n + 1) + n]
                .copy_from_slice(&self.correction[i * n..(i + 1) * n]);
        }
        self.correction = correction;
        let mut raw = self.weights.clone();
        raw.push(0.0);
        self.weights = project_to_simplex(&raw)?;
        Ok(())
    }
}

fn check_eta(eta: f64) -> Result<(), CombinationError> {
    if !(eta.is_finite() && eta > 0.0) {
        return Err(CombinationError::InvalidLearningRate(eta));
    }
    Ok(())
}

/// Dot product summed in sorted term order, so that permuting sellers with
/// identical (weight, forecast) pairs cannot change the result.
fn combine(weights: &[f64], x: &[f64]) -> f64 {
    let mut terms: Vec<f64> = weights.iter().zip(x).map(|(w, x)| w * x).collect();
    ordered_sum(&mut terms)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(tau: f64) -> QuantileLevel {
        QuantileLevel::new(tau).unwrap()
    }

    fn model_with(w: Vec<f64>, d: Vec<f64>) -> QuantileModel {
        QuantileModel::from_parts(q(0.5), w, d, 0.1).unwrap()
    }

    #[test]
    fn qr_predict_examples() {
        let n3 = AvailabilityMask::all_present(3);
        let m = model_with(vec![0.1, 0.6, 0.3], vec![0.0; 9]);
        assert!((m.qr_predict(&[0.0, 1.0, 2.0], &n3).unwrap() - 1.2).abs() < 1e-15);
        let m = model_with(vec![1.0, 0.0, 0.0], vec![0.0; 9]);
        assert_eq!(m.qr_predict(&[5.0, 9.0, -3.0], &n3).unwrap(), 5.0);
        let m = QuantileModel::new(q(0.5), 3, 0.05).unwrap();
        assert!((m.qr_predict(&[3.0, 3.0, 3.0], &n3).unwrap() - 3.0).abs() < 1e-15);
    }

    #[test]
    fn qr_rejects_missing() {
        let m = QuantileModel::new(q(0.5), 2, 0.05).unwrap();
        let alpha = AvailabilityMask::from_flags(&[0, 1]).unwrap();
        assert!(matches!(
            m.qr_predict(&[1.0, 0.0], &alpha),
            Err(CombinationError::MissingInputs)
        ));
    }

    #[test]
    fn qr_update_zero_gradient_is_noop() {
        let mut m = model_with(vec![0.1, 0.6, 0.3], vec![0.0; 9]);
        let before = m.clone();
        let out = m
            .qr_update(&[0.0, 1.0, 2.0], &AvailabilityMask::all_present(3), 1.2)
            .unwrap();
        // 0.6 + 0.6 is exact, so y equals the prediction
        assert_eq!(out.subgradient, 0.0);
        assert_eq!(m, before);
    }

    #[test]
    fn qr_update_hand_example() {
        // w' = [0.5 + 0.1*0.5*1, 0.5] = [0.55, 0.5]; projection subtracts 0.025 from both
        let mut m = model_with(vec![0.5, 0.5], vec![0.0; 4]);
        m.qr_update(&[1.0, 0.0], &AvailabilityMask::all_present(2), 10.0)
            .unwrap();
        assert!((m.weights()[0] - 0.525).abs() < 1e-15);
        assert!((m.weights()[1] - 0.475).abs() < 1e-15);
    }

    #[test]
    fn single_seller_weight_stays_one() {
        let mut m = QuantileModel::new(q(0.3), 1, 0.5).unwrap();
        for y in [-4.0, 10.0, 0.0, 3.0] {
            m.qr_update(&[2.0], &AvailabilityMask::all_present(1), y)
                .unwrap();
            assert_eq!(m.weights(), &[1.0]);
        }
    }

    #[test]
    fn effective_weights_examples() {
        let m = model_with(vec![0.5, 0.5], vec![0.0, 0.2, 0.0, -0.2]);
        assert_eq!(
            m.effective_weights(&AvailabilityMask::all_present(2))
                .unwrap()
                .0,
            vec![0.5, 0.5]
        );
        let alpha = AvailabilityMask::from_flags(&[0, 1]).unwrap();
        let theta = m.effective_weights(&alpha).unwrap();
        assert!((theta.0[0] - 0.7).abs() < 1e-15);
        assert!((theta.0[1] - 0.3).abs() < 1e-15);

        let zero = model_with(vec![0.2, 0.8], vec![0.0; 4]);
        assert_eq!(
            zero.effective_weights(&AvailabilityMask::all_missing(2))
                .unwrap()
                .0,
            vec![0.2, 0.8]
        );
    }

    #[test]
    fn rqr_predict_examples() {
        let m = model_with(vec![0.5, 0.5], vec![0.0, 0.2, 0.0, -0.2]);
        let alpha = AvailabilityMask::from_flags(&[0, 1]).unwrap();
        // masked entry is ignored even if the caller left a value there
        assert!((m.rqr_predict(&[2.0, 99.0], &alpha).unwrap() - 1.4).abs() < 1e-15);
        assert_eq!(
            m.rqr_predict(&[2.0, 3.0], &AvailabilityMask::all_missing(2))
                .unwrap(),
            0.0
        );

        let m = model_with(vec![0.1, 0.6, 0.3], vec![0.3; 9]);
        let n3 = AvailabilityMask::all_present(3);
        let x = [0.4, 1.7, -2.2];
        assert_eq!(
            m.rqr_predict(&x, &n3).unwrap(),
            m.qr_predict(&x, &n3).unwrap()
        );
    }

    #[test]
    fn rqr_update_leaves_d_alone_without_missing() {
        let mut m = QuantileModel::new(q(0.5), 3, 0.1).unwrap();
        m.rqr_update(&[1.0, 2.0, 3.0], &AvailabilityMask::all_present(3), 10.0)
            .unwrap();
        assert!(m.correction().iter().all(|&d| d == 0.0));
    }

    #[test]
    fn rqr_update_all_missing_keeps_weights() {
        let mut m = model_with(vec![0.3, 0.7], vec![0.0; 4]);
        m.rqr_update(&[1.0, 2.0], &AvailabilityMask::all_missing(2), 5.0)
            .unwrap();
        assert_eq!(m.weights(), &[0.3, 0.7]);
        assert!(m.correction().iter().all(|&d| d == 0.0));
    }

    #[test]
    fn rqr_update_hand_example() {
        // y > prediction with tau = 0.5 gives g = -0.5; eta = 0.1, x_hat(alpha) = [2, 0]
        let mut m = model_with(vec![0.5, 0.5], vec![0.0; 4]);
        let alpha = AvailabilityMask::from_flags(&[0, 1]).unwrap();
        let out = m.rqr_update(&[2.0, 0.0], &alpha, 10.0).unwrap();
        assert_eq!(out.subgradient, -0.5);
        assert!((m.correction_at(0, 1) - 0.1).abs() < 1e-15);
        assert_eq!(m.correction_at(0, 0), 0.0);
        assert_eq!(m.correction_at(1, 0), 0.0);
        assert_eq!(m.correction_at(1, 1), 0.0);
        // raw w = [0.6, 0.5] -> projected [0.55, 0.45]
        assert!((m.weights()[0] - 0.55).abs() < 1e-15);
        assert!((m.weights()[1] - 0.45).abs() < 1e-15);
    }

    #[test]
    fn add_seller_extends_state() {
        let mut m = model_with(vec![0.4, 0.6], vec![1.0, 2.0, 3.0, 4.0]);
        m.add_seller().unwrap();
        assert_eq!(m.weights(), &[0.4, 0.6, 0.0]);
        assert_eq!(
            m.correction(),
            &[1.0, 2.0, 0.0, 3.0, 4.0, 0.0, 0.0, 0.0, 0.0]
        );
    }

    #[test]
    fn from_parts_validates() {
        assert!(matches!(
            QuantileModel::from_parts(q(0.5), vec![0.5, 0.6], vec![0.0; 4], 0.1),
            Err(CombinationError::NotOnSimplex)
        ));
        assert!(QuantileModel::from_parts(q(0.5), vec![0.5, 0.5], vec![0.0; 3], 0.1).is_err());
        assert!(QuantileModel::new(q(0.5), 2, 0.0).is_err());
        assert!(QuantileModel::new(q(0.5), 0, 0.1).is_err());
    }

    #[test]
    fn mask_flags_round_trip() {
        let mask = AvailabilityMask::from_flags(&[0, 1, 1]).unwrap();
        assert_eq!(mask.missing_count(), 2);
        assert_eq!(mask.available().collect::<Vec<_>>(), vec![0]);
        let json = serde_json::to_string(&mask).unwrap();
        assert_eq!(json, "[0,1,1]");
        assert!(AvailabilityMask::from_flags(&[2]).is_err());
    }
}
