use rand::Rng;

use crate::combination::AvailabilityMask;

/// Independent Bernoulli(`rate`) absences; an all-missing draw is repaired
/// by marking one uniformly chosen seller present.
pub fn gen_missingness<R: Rng + ?Sized>(rate: f64, n: usize, rng: &mut R) -> AvailabilityMask {
    let mut missing: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < rate).collect();
    if n > 0 && missing.iter().all(|&m| m) {
        missing[rng.random_range(0..n)] = false;
    }
    AvailabilityMask::from_missing(missing)
}
