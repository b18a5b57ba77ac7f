//! Small random-sampling helpers shared by the generators and estimators.

use rand::Rng;
use rand_distr::{Distribution, Exp1};

/// Uniform draw from the probability simplex (Dirichlet(1, …, 1)).
pub fn sample_simplex<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Inverse-CDF draw of an index from a probability vector.
pub fn sample_index<R: Rng + ?Sized>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding left u above the final partial sum: take the last index with mass
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn simplex_samples_are_distributions() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..6 {
            let v = sample_simplex(&mut rng, n);
            assert!(crate::game::is_distribution(&v));
        }
    }

    #[test]
    fn point_mass_is_always_drawn() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            assert_eq!(sample_index(&mut rng, &[0.0, 1.0, 0.0]), 1);
        }
    }
}
