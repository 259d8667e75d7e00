//! Shapley values of the per-round forecasting game.
//!
//! The game: a coalition `S` of available sellers is worth the negative
//! pinball loss of the robust prediction made with every seller outside `S`
//! treated as missing, using the current `w` and `D`.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::AllocationError;
use crate::combination::{ordered_sum, quantile_loss, AvailabilityMask, QuantileModel};

/// Largest number of available sellers for exact enumeration.
pub const EXACT_SELLER_LIMIT: usize = 20;

/// Value of coalition `members` (a boolean membership vector over all sellers).
pub fn coalition_value(
    model: &QuantileModel,
    x_hat: &[f64],
    alpha: &AvailabilityMask,
    y: f64,
    members: &[bool],
) -> Result<f64, AllocationError> {
    if members.len() != alpha.len() {
        return Err(AllocationError::DimensionMismatch {
            expected: alpha.len(),
            got: members.len(),
        });
    }
    if members
        .iter()
        .enumerate()
        .any(|(i, &m)| m && alpha.is_missing(i))
    {
        return Err(AllocationError::CoalitionNotAvailable);
    }
    let mask = AvailabilityMask::from_missing(members.iter().map(|&m| !m).collect());
    let prediction = model.rqr_predict(x_hat, &mask)?;
    Ok(-quantile_loss(model.tau(), y, prediction))
}

/// Coalition values over the available sellers, indexed by bitmask over
/// `available` (bit `k` set means `available[k]` is in the coalition).
struct CoalitionTable<'a> {
    model: &'a QuantileModel,
    x_hat: &'a [f64],
    y: f64,
    available: Vec<usize>,
    n: usize,
}

impl<'a> CoalitionTable<'a> {
    fn new(
        model: &'a QuantileModel,
        x_hat: &'a [f64],
        alpha: &AvailabilityMask,
        y: f64,
    ) -> Result<Self, AllocationError> {
        if alpha.len() != model.n() || x_hat.len() != model.n() {
            return Err(AllocationError::DimensionMismatch {
                expected: model.n(),
                got: alpha.len().min(x_hat.len()),
            });
        }
        Ok(Self {
            model,
            x_hat,
            y,
            available: alpha.available().collect(),
            n: model.n(),
        })
    }

    fn value(&self, bits: u64) -> Result<f64, AllocationError> {
        let mut missing = vec![true; self.n];
        for (k, &seller) in self.available.iter().enumerate() {
            if bits & (1 << k) != 0 {
                missing[seller] = false;
            }
        }
        let mask = AvailabilityMask::from_missing(missing);
        let prediction = self.model.rqr_predict(self.x_hat, &mask)?;
        Ok(-quantile_loss(self.model.tau(), self.y, prediction))
    }
}

/// Exact Shapley values by subset enumeration. Missing sellers get 0.
pub fn shapley_exact(
    model: &QuantileModel,
    x_hat: &[f64],
    alpha: &AvailabilityMask,
    y: f64,
) -> Result<Vec<f64>, AllocationError> {
    let table = CoalitionTable::new(model, x_hat, alpha, y)?;
    let players = table.available.len();
    if players > EXACT_SELLER_LIMIT {
        return Err(AllocationError::TooManyPlayers {
            players,
            limit: EXACT_SELLER_LIMIT,
        });
    }
    let mut phi = vec![0.0; model.n()];
    if players == 0 {
        return Ok(phi);
    }

    let values = (0..1u64 << players)
        .map(|bits| table.value(bits))
        .collect::<Result<Vec<_>, _>>()?;

    // weight of a coalition of size s not containing the player: s!(p-s-1)!/p!
    let weights: Vec<f64> = (0..players)
        .map(|s| 1.0 / (players as f64 * binomial(players - 1, s)))
        .collect();

    let mut terms = Vec::with_capacity(1 << (players - 1));
    for (k, &seller) in table.available.iter().enumerate() {
        terms.clear();
        let bit = 1u64 << k;
        for bits in (0..1u64 << players).filter(|b| b & bit == 0) {
            let size = bits.count_ones() as usize;
            terms.push(weights[size] * (values[(bits | bit) as usize] - values[bits as usize]));
        }
        phi[seller] = ordered_sum(&mut terms);
    }
    Ok(phi)
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k)
        .fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
        .round()
}

/// Permutation-sampling estimate with per-seller standard errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledShapley {
    pub values: Vec<f64>,
    pub std_errors: Vec<f64>,
}

/// Monte Carlo Shapley estimate from `num_permutations` uniform orderings
/// of the available sellers.
pub fn shapley_sampled<R: Rng + ?Sized>(
    model: &QuantileModel,
    x_hat: &[f64],
    alpha: &AvailabilityMask,
    y: f64,
    num_permutations: usize,
    rng: &mut R,
) -> Result<SampledShapley, AllocationError> {
    if num_permutations == 0 {
        return Err(AllocationError::NoPermutations);
    }
    let players = alpha.available_count();
    let mut order: Vec<usize> = (0..players).collect();
    let orders = (0..num_permutations).map(|_| {
        order.shuffle(rng);
        order.clone()
    });
    shapley_over_orderings(model, x_hat, alpha, y, orders)
}

/// Averages marginal contributions over the given orderings. Each ordering is
/// a permutation of `0..available_count` (positions in the available list).
pub fn shapley_over_orderings<I>(
    model: &QuantileModel,
    x_hat: &[f64],
    alpha: &AvailabilityMask,
    y: f64,
    orderings: I,
) -> Result<SampledShapley, AllocationError>
where
    I: IntoIterator<Item = Vec<usize>>,
{
    let table = CoalitionTable::new(model, x_hat, alpha, y)?;
    let players = table.available.len();
    if players > 63 {
        return Err(AllocationError::TooManyPlayers { players, limit: 63 });
    }
    let mut cache: HashMap<u64, f64> = HashMap::new();
    let mut value = |bits: u64| -> Result<f64, AllocationError> {
        if let Some(&v) = cache.get(&bits) {
            return Ok(v);
        }
        let v = table.value(bits)?;
        cache.insert(bits, v);
        Ok(v)
    };

    let mut sum = vec![0.0; players];
    let mut sum_sq = vec![0.0; players];
    let mut count = 0usize;
    for ordering in orderings {
        if ordering.len() != players {
            return Err(AllocationError::DimensionMismatch {
                expected: players,
                got: ordering.len(),
            });
        }
        let mut bits = 0u64;
        let mut prev = value(0)?;
        for &k in &ordering {
            bits |= 1 << k;
            let next = value(bits)?;
            let marginal = next - prev;
            sum[k] += marginal;
            sum_sq[k] += marginal * marginal;
            prev = next;
        }
        count += 1;
    }
    if count == 0 {
        return Err(AllocationError::NoPermutations);
    }

    let n = count as f64;
    let mut values = vec![0.0; model.n()];
    let mut std_errors = vec![0.0; model.n()];
    for (k, &seller) in table.available.iter().enumerate() {
        let mean = sum[k] / n;
        values[seller] = mean;
        if count > 1 {
            let var = ((sum_sq[k] - n * mean * mean) / (n - 1.0)).max(0.0);
            std_errors[seller] = (var / n).sqrt();
        }
    }
    Ok(SampledShapley { values, std_errors })
}

/// Instantaneous and recursively smoothed Shapley values for one model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapleyState {
    pub phi_s: Vec<f64>,
    pub phi_c: Vec<f64>,
    pub lambda: f64,
}

impl ShapleyState {
    pub fn new(n: usize, lambda: f64) -> Result<Self, AllocationError> {
        super::check_lambda(lambda)?;
        Ok(Self {
            phi_s: vec![0.0; n],
            phi_c: vec![0.0; n],
            lambda,
        })
    }

    /// `phi_c <- lambda * phi_c + (1 - lambda) * phi_s` for every seller,
    /// including missing ones (their `phi_s` is 0, so `phi_c` decays).
    pub fn recursive_update(&mut self, phi_s: &[f64]) -> Result<(), AllocationError> {
        if phi_s.len() != self.phi_c.len() {
            return Err(AllocationError::DimensionMismatch {
                expected: self.phi_c.len(),
                got: phi_s.len(),
            });
        }
        let lambda = self.lambda;
        for (c, &s) in self.phi_c.iter_mut().zip(phi_s) {
            *c = lambda * *c + (1.0 - lambda) * s;
        }
        self.phi_s = phi_s.to_vec();
        Ok(())
    }

    pub fn add_seller(&mut self) {
        self.phi_s.push(0.0);
        self.phi_c.push(0.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::combination::QuantileLevel;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(tau: f64, w: Vec<f64>, d: Vec<f64>) -> QuantileModel {
        QuantileModel::from_parts(QuantileLevel::new(tau).unwrap(), w, d, 0.05).unwrap()
    }

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, n - 1);
                out.push(q);
            }
        }
        out
    }

    #[test]
    fn empty_coalition_value() {
        let m = model(0.5, vec![0.5, 0.5], vec![0.0; 4]);
        let alpha = AvailabilityMask::all_present(2);
        assert_eq!(
            coalition_value(&m, &[1.0, 2.0], &alpha, 0.0, &[false, false]).unwrap(),
            0.0
        );
        let full = coalition_value(&m, &[1.0, 2.0], &alpha, 0.0, &[true, true]).unwrap();
        assert_eq!(full, -0.5 * 1.5);
    }

    #[test]
    fn coalition_must_be_available() {
        let m = model(0.5, vec![0.5, 0.5], vec![0.0; 4]);
        let alpha = AvailabilityMask::from_flags(&[0, 1]).unwrap();
        assert!(matches!(
            coalition_value(&m, &[1.0, 0.0], &alpha, 0.0, &[true, true]),
            Err(AllocationError::CoalitionNotAvailable)
        ));
    }

    #[test]
    fn identical_sellers_share_equally() {
        let m = model(0.3, vec![0.5, 0.5], vec![0.0, 0.1, 0.1, 0.0]);
        let alpha = AvailabilityMask::all_present(2);
        let v1 = coalition_value(&m, &[1.3, 1.3], &alpha, 2.0, &[true, false]).unwrap();
        let v2 = coalition_value(&m, &[1.3, 1.3], &alpha, 2.0, &[false, true]).unwrap();
        assert_eq!(v1, v2);
        let phi = shapley_exact(&m, &[1.3, 1.3], &alpha, 2.0).unwrap();
        assert_eq!(phi[0], phi[1]);
    }

    #[test]
    fn single_available_seller_takes_whole_surplus() {
        let m = model(0.5, vec![0.2, 0.3, 0.5], vec![0.05; 9]);
        let alpha = AvailabilityMask::from_flags(&[1, 0, 1]).unwrap();
        let x = [0.0, 4.0, 0.0];
        let phi = shapley_exact(&m, &x, &alpha, 1.0).unwrap();
        let v1 = coalition_value(&m, &x, &alpha, 1.0, &[false, true, false]).unwrap();
        let v0 = coalition_value(&m, &x, &alpha, 1.0, &[false, false, false]).unwrap();
        assert_eq!(phi, vec![0.0, v1 - v0, 0.0]);
    }

    #[test]
    fn exact_matches_permutation_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let raw: Vec<f64> = (0..3).map(|_| rng.random::<f64>()).collect();
            let s: f64 = raw.iter().sum();
            let w = raw.iter().map(|x| x / s).collect();
            let d = (0..9).map(|_| rng.random_range(-0.3..0.3)).collect();
            let m = model(rng.random_range(0.05..0.95), w, d);
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..3.0)).collect();
            let y = rng.random_range(-2.0..3.0);
            let alpha = AvailabilityMask::all_present(3);
            let exact = shapley_exact(&m, &x, &alpha, y).unwrap();
            let all = shapley_over_orderings(&m, &x, &alpha, y, permutations(3)).unwrap();
            for (a, b) in exact.iter().zip(&all.values) {
                assert!((a - b).abs() < 1e-12);
            }
            let full = coalition_value(&m, &x, &alpha, y, &[true; 3]).unwrap();
            let empty = coalition_value(&m, &x, &alpha, y, &[false; 3]).unwrap();
            assert!((exact.iter().sum::<f64>() - (full - empty)).abs() < 1e-9);
        }
    }

    #[test]
    fn sampled_estimate_within_three_standard_errors() {
        let m = model(0.5, vec![0.25, 0.25, 0.5], vec![0.0; 9]);
        let alpha = AvailabilityMask::all_present(3);
        let x = [1.0, 1.0, 3.0];
        let exact = shapley_exact(&m, &x, &alpha, 2.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let est = shapley_sampled(&m, &x, &alpha, 2.5, 400, &mut rng).unwrap();
        for i in 0..3 {
            let tol = 3.0 * est.std_errors[i] + 1e-12;
            assert!((est.values[i] - exact[i]).abs() <= tol, "seller {i}");
        }
        // the duplicated pair agree with each other within their combined error
        let gap = (est.values[0] - est.values[1]).abs();
        assert!(gap <= 3.0 * (est.std_errors[0] + est.std_errors[1]) + 1e-12);
    }

    #[test]
    fn sampled_single_player_is_exact() {
        let m = model(0.9, vec![0.5, 0.5], vec![0.0; 4]);
        let alpha = AvailabilityMask::from_flags(&[0, 1]).unwrap();
        let x = [2.0, 0.0];
        let exact = shapley_exact(&m, &x, &alpha, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let est = shapley_sampled(&m, &x, &alpha, 0.5, 1, &mut rng).unwrap();
        assert_eq!(est.values, exact);
    }

    #[test]
    fn exact_guard_on_player_count() {
        let n = EXACT_SELLER_LIMIT + 1;
        let m = QuantileModel::new(QuantileLevel::new(0.5).unwrap(), n, 0.05).unwrap();
        let alpha = AvailabilityMask::all_present(n);
        assert!(matches!(
            shapley_exact(&m, &vec![1.0; n], &alpha, 0.0),
            Err(AllocationError::TooManyPlayers { .. })
        ));
    }

    #[test]
    fn recursive_update_examples() {
        let mut s = ShapleyState::new(2, 0.0).unwrap();
        s.recursive_update(&[0.3, -0.2]).unwrap();
        assert_eq!(s.phi_c, vec![0.3, -0.2]);

        let mut s = ShapleyState::new(2, 0.7).unwrap();
        s.phi_c = vec![0.25, 0.25];
        s.recursive_update(&[0.25, 0.25]).unwrap();
        assert_eq!(s.phi_c, vec![0.25, 0.25]);

        let mut s = ShapleyState::new(2, 0.9).unwrap();
        s.phi_c = vec![1.0, 0.0];
        s.recursive_update(&[0.0, 1.0]).unwrap();
        assert!((s.phi_c[0] - 0.9).abs() < 1e-15);
        assert!((s.phi_c[1] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn state_rejects_bad_lambda() {
        assert!(ShapleyState::new(2, 1.0).is_err());
        assert!(ShapleyState::new(2, -0.1).is_err());
    }
}
