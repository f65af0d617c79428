//! HAR-family design matrices.
//!
//! Every model regresses the forward `h`-day mean of a firm's RV on daily, weekly
//! (5-day) and monthly (22-day) components, either of the target firm alone
//! ([`Scope::Benchmark`]) or of every firm in the panel ([`Scope::CrossSection`]).

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::ErrorKind;
use crate::measures::{temporal_average, AverageMode};
use crate::panel::{RealizedPanel, MONTHLY_WINDOW, WEEKLY_WINDOW};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("{variant} needs {measure}, which this panel does not provide")]
    MeasureUnavailable { variant: Variant, measure: &'static str },
    #[error("no usable rows in days {t0}..={t1} after trimming (need t >= {first}, t + h <= {last})")]
    EmptyRangeAfterTrim {
        t0: usize,
        t1: usize,
        first: usize,
        last: usize,
    },
    #[error("horizon must be at least 1")]
    InvalidHorizon,
    #[error("unknown firm `{0}`")]
    UnknownFirm(String),
    #[error("column {index} (`{name}`) has zero variance")]
    ZeroVarianceColumn { index: usize, name: String },
    #[error("standardization needs at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("cannot parse model variant `{0}`")]
    UnknownVariant(String),
}

impl FeatureError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            FeatureError::InvalidHorizon | FeatureError::UnknownFirm(_) | FeatureError::UnknownVariant(_) => {
                ErrorKind::Config
            }
            FeatureError::MeasureUnavailable { .. } | FeatureError::EmptyRangeAfterTrim { .. } => ErrorKind::Data,
            FeatureError::ZeroVarianceColumn { .. } | FeatureError::TooFewRows(_) => ErrorKind::Numerical,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    Har,
    Harq,
    HarqF,
    HarJ,
    Char,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Har,
        Variant::Harq,
        Variant::HarqF,
        Variant::HarJ,
        Variant::Char,
    ];

    pub fn needs_full_measures(self) -> bool {
        !matches!(self, Variant::Har)
    }

    /// Predictor columns contributed by each in-scope firm.
    pub fn columns_per_firm(self) -> usize {
        match self {
            Variant::Har | Variant::Char => 3,
            Variant::Harq | Variant::HarJ => 4,
            Variant::HarqF => 6,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Har => "har",
            Variant::Harq => "harq",
            Variant::HarqF => "harq-f",
            Variant::HarJ => "har-j",
            Variant::Char => "char",
        })
    }
}

impl FromStr for Variant {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "har" => Ok(Variant::Har),
            "harq" => Ok(Variant::Harq),
            "harq-f" | "harqf" => Ok(Variant::HarqF),
            "har-j" | "harj" => Ok(Variant::HarJ),
            "char" => Ok(Variant::Char),
            _ => Err(FeatureError::UnknownVariant(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scope {
    /// Own-firm predictors only.
    Benchmark,
    /// Predictors of every firm in the panel.
    CrossSection,
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scope::Benchmark => "bench",
            Scope::CrossSection => "cross",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelSpec {
    pub variant: Variant,
    pub scope: Scope,
    pub horizon: usize,
}

impl ModelSpec {
    pub fn new(variant: Variant, scope: Scope, horizon: usize) -> Self {
        Self {
            variant,
            scope,
            horizon,
        }
    }
}

/// Regression data for one firm. Row `k` pairs the predictors observed at day
/// `rows[k]` with the mean RV over days `rows[k]+1 ..= rows[k]+h`.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub rows: Vec<usize>,
    pub dates: Vec<NaiveDate>,
    pub horizon: usize,
    pub y: DVector<f64>,
    pub x: DMatrix<f64>,
    pub column_names: Vec<String>,
    /// Columns that are constant over the retained rows.
    pub degenerate: Vec<usize>,
}

impl DesignMatrix {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_predictors(&self) -> usize {
        self.x.ncols()
    }

    /// First and last day entering the target of row `k`.
    pub fn target_span(&self, k: usize) -> (usize, usize) {
        (self.rows[k] + 1, self.rows[k] + self.horizon)
    }

    /// Verifies that every target starts strictly after its predictor day.
    pub fn no_leakage(&self) -> bool {
        (0..self.n_rows()).all(|k| self.rows[k] < self.target_span(k).0)
    }
}

/// First day index with a defined monthly aggregate.
pub const FIRST_USABLE_DAY: usize = MONTHLY_WINDOW - 1;

struct FirmSeries {
    cols: Vec<(String, Vec<Option<f64>>)>,
}

fn trailing(series: &[f64], window: usize) -> Vec<Option<f64>> {
    temporal_average(series, window, AverageMode::Trailing).unwrap_or_else(|_| vec![None; series.len()])
}

fn firm_columns(panel: &RealizedPanel, f: usize, variant: Variant) -> Result<FirmSeries, FeatureError> {
    let name = &panel.firms()[f];
    let unavailable = |measure| FeatureError::MeasureUnavailable { variant, measure };
    let rv = panel.rv(f);
    let some = |s: &[f64]| s.iter().map(|&v| Some(v)).collect::<Vec<_>>();
    let rv_d = some(rv);
    let rv_w = panel.rv_weekly(f).to_vec();
    let rv_m = panel.rv_monthly(f).to_vec();
    let product = |a: &[Option<f64>], b: &[Option<f64>]| -> Vec<Option<f64>> {
        a.iter().zip(b).map(|(x, q)| Some((*x)? * (*q)?.sqrt())).collect()
    };
    let mut cols = Vec::with_capacity(variant.columns_per_firm());
    match variant {
        Variant::Char => {
            let bpv = panel.bpv(f).ok_or_else(|| unavailable("bipower variation"))?;
            cols.push((format!("BPV_d[{name}]"), some(bpv)));
            cols.push((format!("BPV_w[{name}]"), trailing(bpv, WEEKLY_WINDOW)));
            cols.push((format!("BPV_m[{name}]"), trailing(bpv, MONTHLY_WINDOW)));
        }
        _ => {
            cols.push((format!("RV_d[{name}]"), rv_d.clone()));
            cols.push((format!("RV_w[{name}]"), rv_w.clone()));
            cols.push((format!("RV_m[{name}]"), rv_m.clone()));
        }
    }
    match variant {
        Variant::Har | Variant::Char => {}
        Variant::Harq | Variant::HarqF => {
            let rq = panel.rq(f).ok_or_else(|| unavailable("realized quarticity"))?;
            cols.push((format!("RV_d×√RQ[{name}]"), product(&rv_d, &some(rq))));
            if variant == Variant::HarqF {
                cols.push((
                    format!("RV_w×√RQ_w[{name}]"),
                    product(&rv_w, &trailing(rq, WEEKLY_WINDOW)),
                ));
                cols.push((
                    format!("RV_m×√RQ_m[{name}]"),
                    product(&rv_m, &trailing(rq, MONTHLY_WINDOW)),
                ));
            }
        }
        Variant::HarJ => {
            let j = panel.jump(f).ok_or_else(|| unavailable("jump variation"))?;
            cols.push((format!("J_d[{name}]"), some(j)));
        }
    }
    Ok(FirmSeries { cols })
}

/// Builds the design for `firm` over predictor days `range = (t0, t1)` (inclusive).
/// `None` uses the whole panel.
pub fn build_design(
    panel: &RealizedPanel,
    firm: &str,
    spec: &ModelSpec,
    range: Option<(usize, usize)>,
) -> Result<DesignMatrix, FeatureError> {
    if spec.horizon == 0 {
        return Err(FeatureError::InvalidHorizon);
    }
    let target = panel
        .firm_index(firm)
        .map_err(|_| FeatureError::UnknownFirm(firm.to_string()))?;
    let n_days = panel.n_days();
    let (t0, t1) = range.unwrap_or((0, n_days.saturating_sub(1)));
    let h = spec.horizon;
    let first = t0.max(FIRST_USABLE_DAY);
    let last_allowed = n_days.checked_sub(1 + h);
    let last = last_allowed.map(|l| l.min(t1));
    let rows: Vec<usize> = match last {
        Some(last) if first <= last => (first..=last).collect(),
        _ => {
            return Err(FeatureError::EmptyRangeAfterTrim {
                t0,
                t1,
                first: FIRST_USABLE_DAY,
                last: last_allowed.unwrap_or(0),
            })
        }
    };

    let in_scope: Vec<usize> = match spec.scope {
        Scope::Benchmark => vec![target],
        Scope::CrossSection => (0..panel.n_firms()).collect(),
    };
    let series = in_scope
        .iter()
        .map(|&f| firm_columns(panel, f, spec.variant))
        .collect::<Result<Vec<_>, _>>()?;
    let columns: Vec<&(String, Vec<Option<f64>>)> = series.iter().flat_map(|s| s.cols.iter()).collect();

    let n = rows.len();
    let p = columns.len();
    let mut x = DMatrix::<f64>::zeros(n, p);
    for (j, (name, col)) in columns.iter().enumerate() {
        for (k, &t) in rows.iter().enumerate() {
            // Rows start at the first day with a monthly aggregate, so every column is defined.
            x[(k, j)] = col[t].unwrap_or_else(|| panic!("{name} undefined at day {t}"));
        }
    }
    let rv = panel.rv(target);
    let y = DVector::from_iterator(
        n,
        rows.iter().map(|&t| rv[t + 1..=t + h].iter().sum::<f64>() / h as f64),
    );
    let degenerate = (0..p)
        .filter(|&j| {
            let c = x.column(j);
            let v0 = c[0];
            c.iter().all(|&v| v == v0)
        })
        .collect();
    Ok(DesignMatrix {
        dates: rows.iter().map(|&t| panel.days()[t]).collect(),
        rows,
        horizon: h,
        y,
        x,
        column_names: columns.iter().map(|(n, _)| n.clone()).collect(),
        degenerate,
    })
}

/// Column-wise centering and scaling to unit sample standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardization {
    /// Standardized kept columns.
    pub x: DMatrix<f64>,
    pub centers: Vec<f64>,
    pub scales: Vec<f64>,
    /// Original indices of the kept columns.
    pub kept: Vec<usize>,
    /// Original indices of zero-variance columns that were removed.
    pub dropped: Vec<usize>,
    pub n_original: usize,
}

impl Standardization {
    /// Maps coefficients fitted on the standardized columns back to the original
    /// scale. Dropped columns get a zero coefficient.
    pub fn destandardize(&self, intercept: f64, beta_std: &[f64]) -> (f64, Vec<f64>) {
        let mut beta = vec![0.0; self.n_original];
        let mut b0 = intercept;
        for (i, &j) in self.kept.iter().enumerate() {
            let b = beta_std[i] / self.scales[i];
            beta[j] = b;
            b0 -= self.centers[i] * b;
        }
        (b0, beta)
    }

    /// Applies the stored transform to a full-width row of new data.
    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        self.kept
            .iter()
            .enumerate()
            .map(|(i, &j)| (row[j] - self.centers[i]) / self.scales[i])
            .collect()
    }
}

fn column_moments(x: &DMatrix<f64>, j: usize) -> (f64, f64) {
    let c = x.column(j);
    let n = c.len() as f64;
    let mean = c.sum() / n;
    let ss: f64 = c.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

fn is_zero_variance(mean: f64, sd: f64) -> bool {
    !(sd > 0.0) || sd <= 1e-12 * mean.abs()
}

fn standardize_impl(x: &DMatrix<f64>, names: Option<&[String]>, strict: bool) -> Result<Standardization, FeatureError> {
    let (n, p) = x.shape();
    if n < 2 {
        return Err(FeatureError::TooFewRows(n));
    }
    let mut kept = Vec::with_capacity(p);
    let mut dropped = Vec::new();
    let mut centers = Vec::with_capacity(p);
    let mut scales = Vec::with_capacity(p);
    for j in 0..p {
        let (mean, sd) = column_moments(x, j);
        if is_zero_variance(mean, sd) {
            let name = names.map(|n| n[j].clone()).unwrap_or_else(|| format!("x{j}"));
            if strict {
                return Err(FeatureError::ZeroVarianceColumn { index: j, name });
            }
            log::warn!("dropping zero-variance column {j} (`{name}`)");
            dropped.push(j);
            continue;
        }
        kept.push(j);
        centers.push(mean);
        scales.push(sd);
    }
    let xs = DMatrix::from_fn(n, kept.len(), |r, i| (x[(r, kept[i])] - centers[i]) / scales[i]);
    Ok(Standardization {
        x: xs,
        centers,
        scales,
        kept,
        dropped,
        n_original: p,
    })
}

/// Standardizes every column, failing on the first zero-variance column.
pub fn standardize(x: &DMatrix<f64>) -> Result<Standardization, FeatureError> {
    standardize_impl(x, None, true)
}

/// Standardizes, dropping zero-variance columns with a warning.
pub fn standardize_dropping(x: &DMatrix<f64>, names: Option<&[String]>) -> Result<Standardization, FeatureError> {
    standardize_impl(x, names, false)
}
