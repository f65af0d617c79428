//! Covariance-form cyclic coordinate descent.
//!
//! The intercept is profiled out by centering, so the solver works on
//! `G = Xc'Xc / n`, `c = Xc'yc / n` and minimizes
//!
//! ```text
//! ½ (yy − 2 c'β + β'Gβ) + Σ_j l1_j |β_j| + l2 ‖β‖²
//! ```
//!
//! which equals `(1/2n)‖y − b₀ − Xβ‖² + penalty` at the optimal intercept.

use nalgebra::{DMatrix, DVector};

use super::soft_threshold;
use crate::linalg;

#[derive(Debug, Clone)]
pub(crate) struct GramProblem {
    pub x_mean: Vec<f64>,
    pub y_mean: f64,
    pub gram: DMatrix<f64>,
    pub xty: Vec<f64>,
    pub yy: f64,
}

impl GramProblem {
    pub fn new(x: &DMatrix<f64>, y: &DVector<f64>) -> Self {
        Self::from_rows(x, y, None)
    }

    /// Builds the problem from a subset of rows (all rows when `rows` is `None`).
    pub fn from_rows(x: &DMatrix<f64>, y: &DVector<f64>, rows: Option<&[usize]>) -> Self {
        let p = x.ncols();
        let idx: Vec<usize> = match rows {
            Some(r) => r.to_vec(),
            None => (0..x.nrows()).collect(),
        };
        let n = idx.len();
        let nf = n as f64;
        let x_mean: Vec<f64> = (0..p)
            .map(|j| idx.iter().map(|&i| x[(i, j)]).sum::<f64>() / nf)
            .collect();
        let y_mean = idx.iter().map(|&i| y[i]).sum::<f64>() / nf;
        let xc = DMatrix::from_fn(n, p, |r, j| x[(idx[r], j)] - x_mean[j]);
        let yc = DVector::from_iterator(n, idx.iter().map(|&i| y[i] - y_mean));
        let gram = xc.tr_mul(&xc) / nf;
        let xty = (xc.tr_mul(&yc) / nf).iter().cloned().collect();
        let yy = yc.dot(&yc) / nf;
        Self {
            x_mean,
            y_mean,
            gram,
            xty,
            yy,
        }
    }

    pub fn p(&self) -> usize {
        self.xty.len()
    }

    pub fn intercept(&self, beta: &[f64]) -> f64 {
        self.y_mean - self.x_mean.iter().zip(beta).map(|(m, b)| m * b).sum::<f64>()
    }

    pub fn objective(&self, beta: &[f64], l1: &[f64], l2: f64) -> f64 {
        let p = self.p();
        let mut quad = 0.0;
        for j in 0..p {
            if beta[j] == 0.0 {
                continue;
            }
            let gb: f64 = (0..p).map(|k| self.gram[(j, k)] * beta[k]).sum();
            quad += beta[j] * gb;
        }
        let lin: f64 = self.xty.iter().zip(beta).map(|(c, b)| c * b).sum();
        let pen: f64 = beta.iter().zip(l1).map(|(b, w)| w * b.abs() + l2 * b * b).sum();
        0.5 * (self.yy - 2.0 * lin + quad) + pen
    }
}

pub(crate) struct CdOutcome {
    pub beta: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Runs cyclic coordinate descent in fixed column order from `start`.
pub(crate) fn coordinate_descent(
    prob: &GramProblem,
    l1: &[f64],
    l2: f64,
    start: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> CdOutcome {
    let p = prob.p();
    let g = &prob.gram;
    let mut beta = start.map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; p]);
    let mut gb: Vec<f64> = (0..p).map(|j| (0..p).map(|k| g[(j, k)] * beta[k]).sum()).collect();
    let mut iterations = 0;
    let mut converged = p == 0;
    while !converged && iterations < max_iter {
        iterations += 1;
        let mut max_delta = 0.0f64;
        for j in 0..p {
            let gjj = g[(j, j)];
            let denom = gjj + 2.0 * l2;
            let new = if denom > 0.0 {
                let z = prob.xty[j] - (gb[j] - gjj * beta[j]);
                soft_threshold(z, l1[j]) / denom
            } else {
                0.0
            };
            let delta = new - beta[j];
            if delta != 0.0 {
                for k in 0..p {
                    gb[k] += delta * g[(k, j)];
                }
                beta[j] = new;
                max_delta = max_delta.max(delta.abs());
            }
        }
        converged = max_delta < tol;
    }
    CdOutcome {
        beta,
        iterations,
        converged,
    }
}

/// Re-solves the stationarity equations on the active set with the signs fixed.
///
/// On the correct support and signs the penalized problem is a linear system, so
/// this lands on the exact minimizer. The refined point is accepted only when
/// signs are preserved, inactive coordinates still satisfy their subgradient
/// bound and the objective does not increase.
pub(crate) fn polish(prob: &GramProblem, beta: &[f64], l1: &[f64], l2: f64) -> Option<Vec<f64>> {
    let active: Vec<usize> = (0..prob.p()).filter(|&j| beta[j] != 0.0).collect();
    if active.is_empty() {
        return None;
    }
    let k = active.len();
    let a = DMatrix::from_fn(k, k, |r, c| {
        prob.gram[(active[r], active[c])] + if r == c { 2.0 * l2 } else { 0.0 }
    });
    let b = DVector::from_iterator(k, active.iter().map(|&j| prob.xty[j] - l1[j] * beta[j].signum()));
    let sol = linalg::solve_spd(&a, &b)?;
    let mut refined = vec![0.0; prob.p()];
    for (r, &j) in active.iter().enumerate() {
        if sol[r] == 0.0 || sol[r].signum() != beta[j].signum() {
            return None;
        }
        refined[j] = sol[r];
    }
    let scale = 1.0 + prob.xty.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for j in 0..prob.p() {
        if refined[j] != 0.0 {
            continue;
        }
        let gb: f64 = active.iter().map(|&a| prob.gram[(j, a)] * refined[a]).sum();
        if (prob.xty[j] - gb).abs() > l1[j] + 1e-10 * scale {
            return None;
        }
    }
    let before = prob.objective(beta, l1, l2);
    let after = prob.objective(&refined, l1, l2);
    (after <= before + 1e-13 * before.abs().max(1.0)).then_some(refined)
}
