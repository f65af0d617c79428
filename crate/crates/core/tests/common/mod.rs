#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// `y = X β⁰ + ε` with iid standard normal predictors and noise sd `sigma`.
pub struct Sparse {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub beta: Vec<f64>,
}

pub fn sparse(seed: u64, n: usize, p: usize, actives: &[(usize, f64)], sigma: f64) -> Sparse {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut beta = vec![0.0; p];
    for &(j, b) in actives {
        beta[j] = b;
    }
    let signal = &x * DVector::from_column_slice(&beta);
    let y = DVector::from_fn(n, |i, _| signal[i] + sigma * rng.sample::<f64, _>(StandardNormal));
    Sparse { x, y, beta }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
