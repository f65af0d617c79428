//! Small dense linear-algebra helpers shared by the estimators and the tests.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

/// Condition numbers above this are treated as numerically singular.
pub const MAX_CONDITION: f64 = 1e12;

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Spectral condition number of a symmetric positive semi-definite matrix after
/// rescaling it to unit diagonal, so that column units do not matter.
///
/// Returns `f64::INFINITY` for matrices with a zero diagonal entry or a
/// non-positive smallest eigenvalue.
pub fn scaled_condition_number(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    if n == 0 {
        return 1.0;
    }
    let mut d = Vec::with_capacity(n);
    for i in 0..n {
        let v = a[(i, i)];
        if !(v > 0.0) || !v.is_finite() {
            return f64::INFINITY;
        }
        d.push(v.sqrt());
    }
    let scaled = DMatrix::from_fn(n, n, |i, j| a[(i, j)] / (d[i] * d[j]));
    let eig = SymmetricEigen::new(scaled).eigenvalues;
    let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min > 0.0) {
        return f64::INFINITY;
    }
    max / min
}

/// Solves `a x = b` for symmetric positive definite `a`, refusing matrices whose
/// scaled condition number exceeds [`MAX_CONDITION`].
pub fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    if scaled_condition_number(a) > MAX_CONDITION {
        return None;
    }
    let chol = Cholesky::new(a.clone())?;
    Some(chol.solve(b))
}

/// Inverse of a symmetric positive definite matrix, with the same conditioning guard.
pub fn inverse_spd(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if scaled_condition_number(a) > MAX_CONDITION {
        return None;
    }
    Cholesky::new(a.clone()).map(|c| c.inverse())
}
