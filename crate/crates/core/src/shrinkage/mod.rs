//! Penalized least squares: OLS, lasso, adaptive lasso and elastic net.
//!
//! All penalized fits minimize
//!
//! ```text
//! (1/2n) ‖y − b₀ − Xβ‖² + λ Σ_j [ η w_j |β_j| + (1 − η) β_j² ]
//! ```
//!
//! with the intercept `b₀` unpenalized. Lasso is `η = 1, w = 1`, adaptive lasso
//! `η = 1` with pilot-based weights, elastic net uses the supplied `η` and `w = 1`.

mod cv;
mod solver;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg;
use solver::{coordinate_descent, polish, GramProblem};

pub use cv::{cross_validate, fit_with_cv, CvOptions, CvResult, FoldScheme};

pub const DEFAULT_TOL: f64 = 1e-7;
pub const DEFAULT_MAX_ITER: usize = 100_000;
pub const DEFAULT_ETA: f64 = 0.5;
pub const DEFAULT_GAMMA: f64 = 1.0;
/// Floor on pilot magnitudes so adaptive weights stay finite.
pub const WEIGHT_FLOOR: f64 = 1e-6;
/// Ridge penalty for the adaptive-lasso pilot when OLS is infeasible.
pub const PILOT_RIDGE: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShrinkageError {
    #[error("design matrix is singular or too ill-conditioned for least squares")]
    SingularDesign,
    #[error("coordinate descent did not converge within {max_iter} sweeps")]
    NotConverged { max_iter: usize },
    #[error("non-finite value in the inputs")]
    NonFiniteInput,
    #[error("invalid penalty: {0}")]
    InvalidPenalty(String),
    #[error("cross-validation with {folds} folds needs more rows, got {rows}")]
    TooFewRows { rows: usize, folds: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PenaltyKind {
    /// Ordinary least squares.
    None,
    Lasso,
    AdaptiveLasso,
    ElasticNet,
}

impl fmt::Display for PenaltyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PenaltyKind::None => "ols",
            PenaltyKind::Lasso => "lasso",
            PenaltyKind::AdaptiveLasso => "alasso",
            PenaltyKind::ElasticNet => "enet",
        })
    }
}

impl FromStr for PenaltyKind {
    type Err = ShrinkageError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ols" | "none" => Ok(PenaltyKind::None),
            "lasso" => Ok(PenaltyKind::Lasso),
            "alasso" | "adaptive-lasso" | "adaptive" => Ok(PenaltyKind::AdaptiveLasso),
            "enet" | "elastic-net" | "elasticnet" => Ok(PenaltyKind::ElasticNet),
            _ => Err(ShrinkageError::InvalidPenalty(format!("unknown penalty `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec {
    pub kind: PenaltyKind,
    pub lambda: f64,
    /// ℓ₁ share of the elastic-net penalty.
    pub eta: f64,
    /// Exponent of the adaptive weights.
    pub gamma: f64,
    /// Per-coefficient ℓ₁ weights (adaptive lasso).
    pub weights: Option<Vec<f64>>,
}

impl PenaltySpec {
    pub fn ols() -> Self {
        Self {
            kind: PenaltyKind::None,
            lambda: 0.0,
            eta: 1.0,
            gamma: DEFAULT_GAMMA,
            weights: None,
        }
    }

    pub fn lasso(lambda: f64) -> Self {
        Self {
            kind: PenaltyKind::Lasso,
            lambda,
            ..Self::ols()
        }
    }

    pub fn adaptive_lasso(lambda: f64, weights: Vec<f64>) -> Self {
        Self {
            kind: PenaltyKind::AdaptiveLasso,
            lambda,
            weights: Some(weights),
            ..Self::ols()
        }
    }

    pub fn elastic_net(lambda: f64, eta: f64) -> Self {
        Self {
            kind: PenaltyKind::ElasticNet,
            lambda,
            eta,
            ..Self::ols()
        }
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        Self { lambda, ..self.clone() }
    }

    fn effective_eta(&self) -> f64 {
        match self.kind {
            PenaltyKind::ElasticNet => self.eta,
            _ => 1.0,
        }
    }

    pub fn validate(&self, p: usize) -> Result<(), ShrinkageError> {
        let bad = |m: String| Err(ShrinkageError::InvalidPenalty(m));
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return bad(format!("lambda must be finite and >= 0, got {}", self.lambda));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return bad(format!("eta must lie in [0, 1], got {}", self.eta));
        }
        if !(self.gamma > 0.0) {
            return bad(format!("gamma must be > 0, got {}", self.gamma));
        }
        match (&self.kind, &self.weights) {
            (PenaltyKind::AdaptiveLasso, None) => bad("adaptive lasso needs weights".into()),
            (_, Some(w)) if w.len() != p => bad(format!("{} weights for {p} coefficients", w.len())),
            (_, Some(w)) if w.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) => {
                bad("weights must be finite and >= 0".into())
            }
            _ => Ok(()),
        }
    }

    /// Per-coordinate ℓ₁ thresholds `λ η w_j`.
    pub fn l1_thresholds(&self, p: usize) -> Vec<f64> {
        let base = self.lambda * self.effective_eta();
        match &self.weights {
            Some(w) => w.iter().map(|wj| base * wj).collect(),
            None => vec![base; p],
        }
    }

    /// Coefficient of `‖β‖²`, `λ (1 − η)`.
    pub fn l2_coefficient(&self) -> f64 {
        self.lambda * (1.0 - self.effective_eta())
    }

    pub fn penalty(&self, beta: &[f64]) -> f64 {
        let l1 = self.l1_thresholds(beta.len());
        let l2 = self.l2_coefficient();
        beta.iter().zip(&l1).map(|(b, w)| w * b.abs() + l2 * b * b).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Stop when the largest coefficient change in a sweep is below this.
    pub tol: f64,
    /// Maximum number of full sweeps.
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyFit {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub active_set: Vec<usize>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl PenaltyFit {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.intercept + self.coefficients.iter().zip(row).map(|(b, x)| b * x).sum::<f64>()
    }

    pub fn l1_norm(&self) -> f64 {
        self.coefficients.iter().map(|b| b.abs()).sum()
    }
}

/// `sign(z) · max(|z| − t, 0)`.
#[inline]
pub fn soft_threshold(z: f64, t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

fn check_inputs(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<(), ShrinkageError> {
    if x.nrows() != y.len() {
        return Err(ShrinkageError::DimensionMismatch(format!(
            "{} rows in X, {} targets",
            x.nrows(),
            y.len()
        )));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(ShrinkageError::NonFiniteInput);
    }
    Ok(())
}

/// Least squares on the columns of `x` as given (no implicit intercept).
pub fn fit_ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<Vec<f64>, ShrinkageError> {
    check_inputs(x, y)?;
    if x.ncols() > x.nrows() {
        return Err(ShrinkageError::SingularDesign);
    }
    let xtx = x.tr_mul(x);
    let xty = x.tr_mul(y);
    let beta = linalg::solve_spd(&xtx, &xty).ok_or(ShrinkageError::SingularDesign)?;
    Ok(beta.iter().cloned().collect())
}

/// Penalized objective with an explicit intercept, evaluated from residuals.
pub fn objective(x: &DMatrix<f64>, y: &DVector<f64>, intercept: f64, beta: &[f64], spec: &PenaltySpec) -> f64 {
    let n = x.nrows() as f64;
    let b = DVector::from_column_slice(beta);
    let fitted = x * b;
    let rss: f64 = y
        .iter()
        .zip(fitted.iter())
        .map(|(yi, fi)| {
            let r = yi - intercept - fi;
            r * r
        })
        .sum();
    rss / (2.0 * n) + spec.penalty(beta)
}

/// Largest violation of the optimality conditions of `fit` under `spec`.
///
/// With `g_j = x_j'(y − b₀ − Xβ)/n`, active coordinates need
/// `g_j − 2λ(1−η)β_j = λ η w_j sign(β_j)` and inactive ones `|g_j| ≤ λ η w_j`.
pub fn kkt_violation(x: &DMatrix<f64>, y: &DVector<f64>, fit: &PenaltyFit, spec: &PenaltySpec) -> f64 {
    let n = x.nrows() as f64;
    let p = x.ncols();
    let b = DVector::from_column_slice(&fit.coefficients);
    let r = y - x * b - DVector::from_element(x.nrows(), fit.intercept);
    let l1 = spec.l1_thresholds(p);
    let l2 = spec.l2_coefficient();
    let mut worst = r.sum().abs() / n;
    for j in 0..p {
        let g = x.column(j).dot(&r) / n;
        let bj = fit.coefficients[j];
        let v = if bj != 0.0 {
            (g - 2.0 * l2 * bj - l1[j] * bj.signum()).abs()
        } else {
            (g.abs() - l1[j]).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

pub(crate) fn fit_problem(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    prob: &GramProblem,
    spec: &PenaltySpec,
    opts: &SolverOptions,
    warm: Option<&[f64]>,
) -> Result<PenaltyFit, ShrinkageError> {
    let p = prob.p();
    let (beta, iterations, converged) = if spec.kind == PenaltyKind::None {
        let beta = linalg::solve_spd(&prob.gram, &DVector::from_column_slice(&prob.xty))
            .ok_or(ShrinkageError::SingularDesign)?;
        (beta.iter().cloned().collect::<Vec<_>>(), 0, true)
    } else {
        let l1 = spec.l1_thresholds(p);
        let l2 = spec.l2_coefficient();
        let out = coordinate_descent(prob, &l1, l2, warm, opts.tol, opts.max_iter);
        if !out.converged {
            return Err(ShrinkageError::NotConverged {
                max_iter: opts.max_iter,
            });
        }
        let beta = polish(prob, &out.beta, &l1, l2).unwrap_or(out.beta);
        (beta, out.iterations, true)
    };
    let intercept = prob.intercept(&beta);
    let active_set = (0..p).filter(|&j| beta[j] != 0.0).collect();
    let objective = objective(x, y, intercept, &beta, spec);
    Ok(PenaltyFit {
        intercept,
        coefficients: beta,
        active_set,
        objective,
        iterations,
        converged,
    })
}

/// Fits the penalized regression with an unpenalized intercept.
///
/// `PenaltyKind::None` solves the normal equations directly; the other kinds run
/// cyclic coordinate descent in column order followed by an exact refinement on
/// the detected support.
pub fn fit_penalized(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    spec: &PenaltySpec,
    opts: &SolverOptions,
) -> Result<PenaltyFit, ShrinkageError> {
    check_inputs(x, y)?;
    spec.validate(x.ncols())?;
    let prob = GramProblem::new(x, y);
    fit_problem(x, y, &prob, spec, opts, None)
}

/// `1 / max(|φ_j|, ε)^γ` with `ε = 1e−6`.
pub fn adaptive_weights(pilot: &[f64], gamma: f64) -> Vec<f64> {
    pilot
        .iter()
        .map(|b| 1.0 / b.abs().max(WEIGHT_FLOOR).powf(gamma))
        .collect()
}

/// Pilot slopes for adaptive weights: OLS when `p < 0.9 n` and the design is
/// well conditioned, otherwise ridge with a small penalty.
pub fn pilot_coefficients(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<Vec<f64>, ShrinkageError> {
    check_inputs(x, y)?;
    pilot_from_problem(&GramProblem::new(x, y), x.nrows())
}

pub(crate) fn pilot_from_problem(prob: &GramProblem, n: usize) -> Result<Vec<f64>, ShrinkageError> {
    let c = DVector::from_column_slice(&prob.xty);
    let p = prob.p();
    if (p as f64) < 0.9 * n as f64 {
        if let Some(b) = linalg::solve_spd(&prob.gram, &c) {
            return Ok(b.iter().cloned().collect());
        }
    }
    let ridge = &prob.gram + DMatrix::<f64>::identity(p, p) * PILOT_RIDGE;
    let b = nalgebra::Cholesky::new(ridge)
        .ok_or(ShrinkageError::SingularDesign)?
        .solve(&c);
    Ok(b.iter().cloned().collect())
}

/// Smallest λ at which the all-zero slope vector is optimal for `spec`'s
/// mixing and weights: `max_j |x_j' yc| / (n η w_j)`.
pub fn lambda_max(x: &DMatrix<f64>, y: &DVector<f64>, spec: &PenaltySpec) -> f64 {
    let prob = GramProblem::new(x, y);
    lambda_max_of(&prob, spec)
}

pub(crate) fn lambda_max_of(prob: &GramProblem, spec: &PenaltySpec) -> f64 {
    let unit = spec.with_lambda(1.0).l1_thresholds(prob.p());
    prob.xty
        .iter()
        .zip(&unit)
        .filter(|(_, w)| **w > 0.0)
        .map(|(c, w)| c.abs() / w)
        .fold(0.0, f64::max)
}

/// Log-spaced descending grid from λ_max down to `ratio · λ_max`.
pub fn lambda_grid(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    spec: &PenaltySpec,
    n_grid: usize,
    ratio: f64,
) -> Result<Vec<f64>, ShrinkageError> {
    check_inputs(x, y)?;
    let prob = GramProblem::new(x, y);
    grid_from_max(lambda_max_of(&prob, spec), n_grid, ratio)
}

pub(crate) fn grid_from_max(lmax: f64, n_grid: usize, ratio: f64) -> Result<Vec<f64>, ShrinkageError> {
    if n_grid < 2 {
        return Err(ShrinkageError::InvalidPenalty(format!(
            "grid needs at least 2 points, got {n_grid}"
        )));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(ShrinkageError::InvalidPenalty(format!(
            "grid ratio must lie in (0, 1), got {ratio}"
        )));
    }
    // A constant target gives λ_max = 0; keep the grid strictly positive.
    let lmax = lmax.max(f64::MIN_POSITIVE / ratio);
    let last = n_grid - 1;
    Ok((0..n_grid)
        .map(|k| match k {
            0 => lmax,
            k if k == last => lmax * ratio,
            k => lmax * ratio.powf(k as f64 / last as f64),
        })
        .collect())
}

#[cfg(test)]
mod tests;
