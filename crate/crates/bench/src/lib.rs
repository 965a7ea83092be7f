//! Shared inputs for the criterion benches under `benches/`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Deterministic complex matrix with entries in the unit square.
pub fn random_matrix(n: usize, seed: u64) -> Vec<Vec<Complex64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (0..n).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect()).collect()
}

/// Hermitian positive definite `A A† + n I`, a stand-in for a ξ table.
pub fn random_gram(n: usize, seed: u64) -> Vec<Vec<Complex64>> {
    let a = random_matrix(n, seed);
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let s: Complex64 = (0..n).map(|k| a[i][k] * a[j][k].conj()).sum();
                    if i == j {
                        s + n as f64
                    } else {
                        s
                    }
                })
                .collect()
        })
        .collect()
}
