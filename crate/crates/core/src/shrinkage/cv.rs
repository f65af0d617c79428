//! K-fold cross-validation of the penalty level.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::solver::{coordinate_descent, polish, GramProblem};
use super::{
    adaptive_weights, check_inputs, fit_penalized, grid_from_max, lambda_max_of, pilot_from_problem, PenaltyFit,
    PenaltyKind, PenaltySpec, ShrinkageError, SolverOptions,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FoldScheme {
    /// Consecutive time blocks, which keeps serially dependent rows together.
    Contiguous,
    /// Rows permuted with the given seed before splitting into blocks.
    Shuffled { seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvOptions {
    pub folds: usize,
    pub scheme: FoldScheme,
    pub n_grid: usize,
    pub ratio: f64,
    pub solver: SolverOptions,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self {
            folds: 5,
            scheme: FoldScheme::Contiguous,
            n_grid: 100,
            ratio: 1e-4,
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    /// Descending penalty grid.
    pub lambdas: Vec<f64>,
    /// Held-out squared error summed over folds, one entry per grid point.
    pub errors: Vec<f64>,
    pub best_index: usize,
    pub best_lambda: f64,
}

fn fold_assignment(n: usize, folds: usize, scheme: FoldScheme) -> Vec<Vec<usize>> {
    let order: Vec<usize> = match scheme {
        FoldScheme::Contiguous => (0..n).collect(),
        FoldScheme::Shuffled { seed } => {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            idx
        }
    };
    (0..folds)
        .map(|k| {
            let (lo, hi) = (k * n / folds, (k + 1) * n / folds);
            let mut block = order[lo..hi].to_vec();
            block.sort_unstable();
            block
        })
        .collect()
}

/// Held-out squared error of every grid point for one fold, walking the grid
/// from the largest λ with warm starts.
fn fold_errors(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    held_out: &[usize],
    spec: &PenaltySpec,
    lambdas: &[f64],
    solver: &SolverOptions,
) -> Result<Vec<f64>, ShrinkageError> {
    let n = x.nrows();
    let mut train = Vec::with_capacity(n - held_out.len());
    let mut skip = held_out.iter().peekable();
    for i in 0..n {
        if skip.peek() == Some(&&i) {
            skip.next();
        } else {
            train.push(i);
        }
    }
    let prob = GramProblem::from_rows(x, y, Some(&train));
    let p = prob.p();
    // Adaptive weights are re-estimated on the training rows; full-sample
    // weights would let the held-out block shape its own penalty.
    let spec = match spec.kind {
        PenaltyKind::AdaptiveLasso => {
            let pilot = pilot_from_problem(&prob, train.len())?;
            PenaltySpec {
                weights: Some(adaptive_weights(&pilot, spec.gamma)),
                ..spec.clone()
            }
        }
        _ => spec.clone(),
    };
    let mut beta = vec![0.0; p];
    let mut out = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let s = spec.with_lambda(lambda);
        let l1 = s.l1_thresholds(p);
        let l2 = s.l2_coefficient();
        let cd = coordinate_descent(&prob, &l1, l2, Some(&beta), solver.tol, solver.max_iter);
        if !cd.converged {
            return Err(ShrinkageError::NotConverged {
                max_iter: solver.max_iter,
            });
        }
        beta = polish(&prob, &cd.beta, &l1, l2).unwrap_or(cd.beta);
        let b0 = prob.intercept(&beta);
        let sse: f64 = held_out
            .iter()
            .map(|&i| {
                let fit: f64 = (0..p).map(|j| x[(i, j)] * beta[j]).sum::<f64>() + b0;
                (y[i] - fit).powi(2)
            })
            .sum();
        out.push(sse);
    }
    Ok(out)
}

/// Chooses λ by K-fold cross-validation over a log-spaced grid.
///
/// Each fold is scored by fitting on the remaining rows. The grid runs from the
/// full-sample λ_max downwards; among equal summed errors the larger λ wins.
/// Setting `folds` equal to the number of rows gives leave-one-out scoring.
pub fn cross_validate(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    spec: &PenaltySpec,
    opts: &CvOptions,
) -> Result<CvResult, ShrinkageError> {
    check_inputs(x, y)?;
    spec.validate(x.ncols())?;
    if spec.kind == PenaltyKind::None {
        return Err(ShrinkageError::InvalidPenalty(
            "cross-validation needs a penalized fit".into(),
        ));
    }
    let n = x.nrows();
    let k = opts.folds;
    let loo = k == n && n >= 3;
    if k < 2 || (n < 2 * k && !loo) {
        return Err(ShrinkageError::TooFewRows { rows: n, folds: k });
    }
    let full = GramProblem::new(x, y);
    let lambdas = grid_from_max(lambda_max_of(&full, spec), opts.n_grid, opts.ratio)?;
    let blocks = fold_assignment(n, k, opts.scheme);
    let per_fold: Vec<Vec<f64>> = blocks
        .par_iter()
        .map(|b| fold_errors(x, y, b, spec, &lambdas, &opts.solver))
        .collect::<Result<_, _>>()?;
    let mut errors = vec![0.0; lambdas.len()];
    for fold in &per_fold {
        for (acc, e) in errors.iter_mut().zip(fold) {
            *acc += e;
        }
    }
    let mut best_index = 0;
    for (i, e) in errors.iter().enumerate() {
        if *e < errors[best_index] {
            best_index = i;
        }
    }
    Ok(CvResult {
        best_lambda: lambdas[best_index],
        lambdas,
        errors,
        best_index,
    })
}

/// Cross-validates λ (for penalized kinds) and refits on all rows.
pub fn fit_with_cv(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    spec: &PenaltySpec,
    opts: &CvOptions,
) -> Result<(PenaltyFit, Option<CvResult>), ShrinkageError> {
    if spec.kind == PenaltyKind::None {
        return Ok((fit_penalized(x, y, spec, &opts.solver)?, None));
    }
    let cv = cross_validate(x, y, spec, opts)?;
    let fit = fit_penalized(x, y, &spec.with_lambda(cv.best_lambda), &opts.solver)?;
    Ok((fit, Some(cv)))
}
