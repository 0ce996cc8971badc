use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Latin hypercube sample of `n` points in `[0, 1)^d`.
///
/// Each column places exactly one point in every stratum `[k/n, (k+1)/n)`;
/// the stratum order is a seeded permutation and the offset inside the
/// stratum is seeded uniform.
pub fn latin_hypercube(n: usize, d: usize, seed: u64) -> Result<Array2<f64>> {
    if n == 0 || d == 0 {
        return Err(Error::invalid(format!("latin hypercube needs n ≥ 1 and d ≥ 1, got n={n}, d={d}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Array2::zeros((n, d));
    let mut strata: Vec<usize> = (0..n).collect();
    for col in 0..d {
        strata.shuffle(&mut rng);
        for (row, &k) in strata.iter().enumerate() {
            let offset: f64 = rng.gen();
            out[[row, col]] = stratum_point(k, offset, n);
        }
    }
    Ok(out)
}

fn stratum_point(k: usize, offset: f64, n: usize) -> f64 {
    let nf = n as f64;
    let x = (k as f64 + offset) / nf;
    // Rounding can push a point into the next stratum when offset is near 1.
    if (x * nf).floor() as usize == k && x < 1.0 {
        x
    } else {
        k as f64 / nf
    }
}
