//! Equal-predictive-accuracy tests on paired out-of-sample loss sequences.
//!
//! Sign convention throughout: `d_t = L1_t − L2_t`, so positive values favour
//! the second (forecast) model over the first (benchmark).

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal, StudentsT};
use thiserror::Error;

use crate::forecast::Scheme;
use crate::linalg;

/// Minimum sample length for DM and CW.
pub const MIN_OBS: usize = 10;
/// Lower bound applied to long-run variance estimates.
pub const LRV_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EpaError {
    #[error("loss differential is constant, the test statistic is undefined")]
    DegenerateSeries,
    #[error("need at least {min} observations, got {n}")]
    TooShort { n: usize, min: usize },
    #[error("series lengths differ: {0}")]
    LengthMismatch(String),
    #[error("bandwidth {bandwidth} must be smaller than the sample size {n}")]
    InvalidBandwidth { bandwidth: usize, n: usize },
    #[error("non-finite value in the loss series")]
    NonFinite,
    #[error("GW covariance matrix is singular")]
    SingularOmega,
    #[error("the GW test needs a rolling-window run, got an expanding one")]
    ExpandingSchemeRejected,
    #[error("decision-rule regression is singular")]
    SingularDesign,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TestKind {
    Dm,
    Cw,
    Gw,
}

impl fmt::Display for TestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TestKind::Dm => "DM",
            TestKind::Cw => "CW",
            TestKind::Gw => "GW",
        })
    }
}

impl std::str::FromStr for TestKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "dm" => Ok(TestKind::Dm),
            "cw" => Ok(TestKind::Cw),
            "gw" => Ok(TestKind::Gw),
            _ => Err(format!("unknown test `{s}` (expected dm, cw or gw)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sidedness {
    TwoSided,
    UpperOneSided,
    UpperChiSquare,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpaResult {
    pub test: TestKind,
    pub statistic: f64,
    pub p_value: f64,
    pub sidedness: Sidedness,
    pub n: usize,
    pub bandwidth: usize,
    /// Number of GW instruments.
    pub q: Option<usize>,
}

impl EpaResult {
    pub fn rejects(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct HacOptions {
    /// Bartlett bandwidth; `None` uses `h − 1`.
    pub bandwidth: Option<usize>,
    /// Small-sample DM correction with Student-t p-values.
    pub harvey: bool,
}

impl HacOptions {
    fn bandwidth_for(&self, horizon: usize) -> usize {
        self.bandwidth.unwrap_or(horizon.saturating_sub(1))
    }
}

fn standard_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Two-sided p-value of a standard normal statistic.
pub fn normal_two_sided_p(stat: f64) -> f64 {
    (2.0 * standard_normal().sf(stat.abs())).clamp(0.0, 1.0)
}

/// Upper-tail p-value of a standard normal statistic.
pub fn normal_upper_p(stat: f64) -> f64 {
    standard_normal().sf(stat).clamp(0.0, 1.0)
}

/// Upper-tail p-value of a χ² statistic with `q` degrees of freedom.
pub fn chi_square_upper_p(stat: f64, q: usize) -> f64 {
    let dist = ChiSquared::new(q as f64).expect("positive degrees of freedom");
    dist.sf(stat.max(0.0)).clamp(0.0, 1.0)
}

fn check_series(series: &[&[f64]]) -> Result<usize, EpaError> {
    let n = series[0].len();
    if let Some(s) = series.iter().find(|s| s.len() != n) {
        return Err(EpaError::LengthMismatch(format!("{n} vs {}", s.len())));
    }
    if series.iter().any(|s| s.iter().any(|v| !v.is_finite())) {
        return Err(EpaError::NonFinite);
    }
    Ok(n)
}

fn is_constant(series: &[f64]) -> bool {
    series.iter().all(|v| *v == series[0])
}

/// Bartlett-kernel long-run variance `γ₀ + 2 Σ_{l≤B} (1 − l/(B+1)) γ_l` with
/// autocovariances divided by `n`. Constant series are rejected.
pub fn hac_lrv(series: &[f64], bandwidth: usize) -> Result<f64, EpaError> {
    let n = series.len();
    if n == 0 {
        return Err(EpaError::TooShort { n, min: 1 });
    }
    if bandwidth >= n {
        return Err(EpaError::InvalidBandwidth { bandwidth, n });
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(EpaError::NonFinite);
    }
    if is_constant(series) {
        return Err(EpaError::DegenerateSeries);
    }
    let nf = n as f64;
    let mean = series.iter().sum::<f64>() / nf;
    let dev: Vec<f64> = series.iter().map(|v| v - mean).collect();
    let gamma = |l: usize| dev[l..].iter().zip(&dev).map(|(a, b)| a * b).sum::<f64>() / nf;
    let mut lrv = gamma(0);
    for l in 1..=bandwidth {
        lrv += 2.0 * (1.0 - l as f64 / (bandwidth as f64 + 1.0)) * gamma(l);
    }
    Ok(lrv.max(LRV_FLOOR))
}

fn mean_t_stat(series: &[f64], bandwidth: usize) -> Result<f64, EpaError> {
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    Ok(n.sqrt() * mean / hac_lrv(series, bandwidth)?.sqrt())
}

/// Diebold–Mariano test on two loss sequences with default options.
pub fn dm_test(l1: &[f64], l2: &[f64], horizon: usize) -> Result<EpaResult, EpaError> {
    dm_test_with(l1, l2, horizon, &HacOptions::default())
}

/// Diebold–Mariano test: `√n d̄ / √lrv(d)` against a two-sided normal.
pub fn dm_test_with(l1: &[f64], l2: &[f64], horizon: usize, opts: &HacOptions) -> Result<EpaResult, EpaError> {
    let n = check_series(&[l1, l2])?;
    if n < MIN_OBS {
        return Err(EpaError::TooShort { n, min: MIN_OBS });
    }
    let d: Vec<f64> = l1.iter().zip(l2).map(|(a, b)| a - b).collect();
    let bandwidth = opts.bandwidth_for(horizon);
    let mut statistic = mean_t_stat(&d, bandwidth)?;
    let p_value = if opts.harvey {
        let (nf, h) = (n as f64, horizon as f64);
        statistic *= ((nf + 1.0 - 2.0 * h + h * (h - 1.0) / nf) / nf).sqrt();
        let t = StudentsT::new(0.0, 1.0, nf - 1.0).expect("positive degrees of freedom");
        (2.0 * t.sf(statistic.abs())).clamp(0.0, 1.0)
    } else {
        normal_two_sided_p(statistic)
    };
    Ok(EpaResult {
        test: TestKind::Dm,
        statistic,
        p_value,
        sidedness: Sidedness::TwoSided,
        n,
        bandwidth,
        q: None,
    })
}

/// The MSPE-adjusted loss differential `e1² − (e2² − (f1 − f2)²)`.
pub fn cw_adjusted(e1: &[f64], e2: &[f64], f1: &[f64], f2: &[f64]) -> Vec<f64> {
    (0..e1.len())
        .map(|t| e1[t] * e1[t] - (e2[t] * e2[t] - (f1[t] - f2[t]).powi(2)))
        .collect()
}

/// Clark–West test for nested models; model 2 must nest model 1.
/// Upper one-sided normal p-value.
pub fn cw_test(e1: &[f64], e2: &[f64], f1: &[f64], f2: &[f64], horizon: usize) -> Result<EpaResult, EpaError> {
    let n = check_series(&[e1, e2, f1, f2])?;
    if n < MIN_OBS {
        return Err(EpaError::TooShort { n, min: MIN_OBS });
    }
    let f = cw_adjusted(e1, e2, f1, f2);
    let bandwidth = horizon.saturating_sub(1);
    let statistic = mean_t_stat(&f, bandwidth)?;
    Ok(EpaResult {
        test: TestKind::Cw,
        statistic,
        p_value: normal_upper_p(statistic),
        sidedness: Sidedness::UpperOneSided,
        n,
        bandwidth,
        q: None,
    })
}

/// Instruments `h_t` of the conditional test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GwInstruments {
    /// `h_t = 1`: the unconditional version.
    Constant,
    /// `h_t = (1, ΔL_t)'`.
    LaggedLoss,
}

impl GwInstruments {
    pub fn q(self) -> usize {
        match self {
            GwInstruments::Constant => 1,
            GwInstruments::LaggedLoss => 2,
        }
    }

    /// Pairs `(h_t, ΔL_{t+1})` available from the loss-differential series.
    fn pairs(self, dl: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
        match self {
            GwInstruments::Constant => (dl.iter().map(|_| vec![1.0]).collect(), dl.to_vec()),
            GwInstruments::LaggedLoss => (
                dl[..dl.len().saturating_sub(1)].iter().map(|v| vec![1.0, *v]).collect(),
                dl.iter().skip(1).cloned().collect(),
            ),
        }
    }

    fn latest(self, dl: &[f64]) -> Vec<f64> {
        match self {
            GwInstruments::Constant => vec![1.0],
            GwInstruments::LaggedLoss => vec![1.0, *dl.last().unwrap_or(&0.0)],
        }
    }
}

/// Giacomini–White conditional test `n Z̄' Ω̂⁻¹ Z̄` with `Z_t = h_t ΔL_{t+1}`.
///
/// Ω̂ is the uncentered second moment of `Z`; for horizons above one it gains
/// Bartlett-weighted autocovariances up to lag `h − 1`.
pub fn gw_test(
    loss_diff: &[f64],
    instruments: GwInstruments,
    horizon: usize,
    scheme: Scheme,
) -> Result<EpaResult, EpaError> {
    if scheme == Scheme::Expanding {
        return Err(EpaError::ExpandingSchemeRejected);
    }
    check_series(&[loss_diff])?;
    let q = instruments.q();
    let (h, dl) = instruments.pairs(loss_diff);
    let n = dl.len();
    if n <= q || n < MIN_OBS {
        return Err(EpaError::TooShort {
            n,
            min: MIN_OBS.max(q + 1),
        });
    }
    if is_constant(loss_diff) && loss_diff[0] == 0.0 {
        return Err(EpaError::DegenerateSeries);
    }
    let z: Vec<DVector<f64>> = h
        .iter()
        .zip(&dl)
        .map(|(ht, d)| DVector::from_iterator(q, ht.iter().map(|v| v * d)))
        .collect();
    let nf = n as f64;
    let zbar = z.iter().fold(DVector::zeros(q), |acc, zt| acc + zt) / nf;
    let bandwidth = horizon.saturating_sub(1);
    if bandwidth >= n {
        return Err(EpaError::InvalidBandwidth { bandwidth, n });
    }
    let lag_moment = |l: usize| {
        let mut g = DMatrix::<f64>::zeros(q, q);
        for t in l..n {
            g += &z[t] * z[t - l].transpose();
        }
        g / nf
    };
    let mut omega = lag_moment(0);
    for l in 1..=bandwidth {
        let g = lag_moment(l);
        let w = 1.0 - l as f64 / (bandwidth as f64 + 1.0);
        omega += (&g + g.transpose()) * w;
    }
    let inv = linalg::inverse_spd(&omega).ok_or(EpaError::SingularOmega)?;
    let statistic = (nf * zbar.dot(&(&inv * &zbar))).max(0.0);
    Ok(EpaResult {
        test: TestKind::Gw,
        statistic,
        p_value: chi_square_upper_p(statistic, q),
        sidedness: Sidedness::UpperChiSquare,
        n,
        bandwidth,
        q: Some(q),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Choice {
    /// The benchmark forecast `f`.
    Benchmark,
    /// The alternative forecast `g`.
    Alternative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GwDecision {
    pub delta: Vec<f64>,
    /// `δ' h_T` at the final origin.
    pub index: f64,
    pub choice: Choice,
}

/// Regresses `ΔL_{t+1}` on `h_t` and picks the alternative when `δ' h_T > c`;
/// ties go to the benchmark.
pub fn gw_decision_rule(loss_diff: &[f64], instruments: GwInstruments, threshold: f64) -> Result<GwDecision, EpaError> {
    check_series(&[loss_diff])?;
    let q = instruments.q();
    let (h, dl) = instruments.pairs(loss_diff);
    let n = dl.len();
    if n < q {
        return Err(EpaError::TooShort { n, min: q });
    }
    let x = DMatrix::from_fn(n, q, |r, c| h[r][c]);
    let y = DVector::from_column_slice(&dl);
    let delta = linalg::solve_spd(&x.tr_mul(&x), &x.tr_mul(&y)).ok_or(EpaError::SingularDesign)?;
    let h_last = instruments.latest(loss_diff);
    let index: f64 = delta.iter().zip(&h_last).map(|(d, v)| d * v).sum();
    Ok(GwDecision {
        delta: delta.iter().cloned().collect(),
        index,
        choice: if index > threshold {
            Choice::Alternative
        } else {
            Choice::Benchmark
        },
    })
}
