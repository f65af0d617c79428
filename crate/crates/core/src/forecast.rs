//! Pseudo out-of-sample forecasting with rolling or expanding estimation windows.
//!
//! Everything runs in design-row space. With `n_rows` usable rows and horizon
//! `h`, the forecast from row `k` is fitted on rows whose targets end no later
//! than the predictor day of row `k`, i.e. rows `..= k − h`. A window of `P`
//! rows therefore yields `n_rows − P − h + 1` forecasts.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::ErrorKind;
use crate::features::{build_design, standardize_dropping, DesignMatrix, FeatureError, ModelSpec, Scope, Variant};
use crate::panel::{format_date, parse_date, RealizedPanel};
use crate::shrinkage::{
    adaptive_weights, cross_validate, fit_penalized, pilot_coefficients, CvOptions, PenaltyKind, PenaltySpec,
    ShrinkageError, DEFAULT_ETA, DEFAULT_GAMMA,
};

#[derive(Debug, Error)]
pub enum ForecastError {
    #[error("window of {window} rows with horizon {horizon} leaves no forecasts from {usable} usable rows")]
    InsufficientWindow {
        usable: usize,
        window: usize,
        horizon: usize,
    },
    #[error("invalid forecast configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("fit failed for firm {firm}, window ending {date}: {source}")]
    Fit {
        firm: String,
        date: NaiveDate,
        #[source]
        source: ShrinkageError,
    },
    #[error("empty error sequence")]
    EmptySequence,
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed forecast run {path}: {message}")]
    Parse { path: PathBuf, message: String },
}

impl ForecastError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            ForecastError::InvalidConfig(_) => ErrorKind::Config,
            ForecastError::Feature(e) => e.kind(),
            ForecastError::Fit { .. } => ErrorKind::Numerical,
            ForecastError::InsufficientWindow { .. }
            | ForecastError::EmptySequence
            | ForecastError::Io { .. }
            | ForecastError::Parse { .. } => ErrorKind::Data,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    Rolling,
    Expanding,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Rolling => "rolling",
            Scheme::Expanding => "expanding",
        })
    }
}

impl FromStr for Scheme {
    type Err = ForecastError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rolling" => Ok(Scheme::Rolling),
            "expanding" | "recursive" => Ok(Scheme::Expanding),
            _ => Err(ForecastError::InvalidConfig(format!("unknown scheme `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Loss {
    Squared,
    Absolute,
}

impl Loss {
    pub fn apply(self, e: f64) -> f64 {
        match self {
            Loss::Squared => e * e,
            Loss::Absolute => e.abs(),
        }
    }
}

impl fmt::Display for Loss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Loss::Squared => "squared",
            Loss::Absolute => "absolute",
        })
    }
}

impl FromStr for Loss {
    type Err = ForecastError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "squared" | "se" | "mse" => Ok(Loss::Squared),
            "absolute" | "ae" | "mae" => Ok(Loss::Absolute),
            _ => Err(ForecastError::InvalidConfig(format!("unknown loss `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub scheme: Scheme,
    /// Rolling window length, or the initial sample for the expanding scheme, in rows.
    pub window: usize,
    pub horizon: usize,
    pub loss: Loss,
    /// Cross-validate λ on every `cv_refresh`-th window and reuse it in between.
    pub cv_refresh: usize,
    /// Clamp negative forecasts at zero.
    pub floor_zero: bool,
}

impl SchemeConfig {
    pub fn rolling(window: usize, horizon: usize) -> Self {
        Self {
            scheme: Scheme::Rolling,
            window,
            horizon,
            loss: Loss::Squared,
            cv_refresh: 1,
            floor_zero: false,
        }
    }

    pub fn expanding(window: usize, horizon: usize) -> Self {
        Self {
            scheme: Scheme::Expanding,
            ..Self::rolling(window, horizon)
        }
    }

    fn validate(&self) -> Result<(), ForecastError> {
        if self.horizon == 0 {
            return Err(ForecastError::InvalidConfig("horizon must be at least 1".into()));
        }
        if self.window < 2 {
            return Err(ForecastError::InvalidConfig("window must be at least 2 rows".into()));
        }
        if self.cv_refresh == 0 {
            return Err(ForecastError::InvalidConfig(
                "cv refresh stride must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Number of forecasts produced from `usable` design rows.
    pub fn n_forecasts(&self, usable: usize) -> usize {
        (usable + 1).saturating_sub(self.window + self.horizon)
    }
}

/// A HAR variant, its column scope and the estimator used on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelChoice {
    pub variant: Variant,
    pub scope: Scope,
    pub penalty: PenaltyKind,
    pub eta: f64,
    pub gamma: f64,
    pub cv: CvOptions,
}

impl ModelChoice {
    pub fn new(variant: Variant, scope: Scope, penalty: PenaltyKind) -> Self {
        Self {
            variant,
            scope,
            penalty,
            eta: DEFAULT_ETA,
            gamma: DEFAULT_GAMMA,
            cv: CvOptions::default(),
        }
    }

    /// Parses `variant:penalty[:scope]`, e.g. `har:ols`, `harq:lasso:cross`.
    /// Without a scope, OLS models use the own firm only and penalized models
    /// the whole cross-section.
    pub fn parse(s: &str) -> Result<Self, ForecastError> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = |m: String| ForecastError::InvalidConfig(m);
        if !(2..=3).contains(&parts.len()) {
            return Err(bad(format!("model `{s}` is not of the form variant:penalty[:scope]")));
        }
        let variant = parts[0].parse::<Variant>()?;
        let penalty = parts[1].parse::<PenaltyKind>().map_err(|e| bad(e.to_string()))?;
        let scope = match parts.get(2).map(|p| p.to_ascii_lowercase()) {
            None if penalty == PenaltyKind::None => Scope::Benchmark,
            None => Scope::CrossSection,
            Some(p) if p == "bench" || p == "own" => Scope::Benchmark,
            Some(p) if p == "cross" || p == "cs" => Scope::CrossSection,
            Some(p) => return Err(bad(format!("unknown scope `{p}` in `{s}`"))),
        };
        Ok(Self::new(variant, scope, penalty))
    }

    pub fn label(&self) -> String {
        format!("{}:{}:{}", self.variant, self.penalty, self.scope)
    }

    fn spec(&self, horizon: usize) -> ModelSpec {
        ModelSpec::new(self.variant, self.scope, horizon)
    }

    fn penalty_template(&self) -> PenaltySpec {
        match self.penalty {
            PenaltyKind::None => PenaltySpec::ols(),
            PenaltyKind::Lasso => PenaltySpec::lasso(0.0),
            PenaltyKind::AdaptiveLasso => PenaltySpec {
                gamma: self.gamma,
                ..PenaltySpec::adaptive_lasso(0.0, Vec::new())
            },
            PenaltyKind::ElasticNet => PenaltySpec::elastic_net(0.0, self.eta),
        }
    }
}

/// Aligned out-of-sample sequences for one firm and one benchmark/model pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRun {
    pub firm: String,
    pub bench: String,
    pub model: String,
    pub scheme: Scheme,
    pub window: usize,
    pub horizon: usize,
    pub loss: Loss,
    /// Forecast origin dates.
    pub dates: Vec<NaiveDate>,
    pub actual: Vec<f64>,
    pub f1: Vec<f64>,
    pub f2: Vec<f64>,
    pub e1: Vec<f64>,
    pub e2: Vec<f64>,
    pub l1: Vec<f64>,
    pub l2: Vec<f64>,
    pub d: Vec<f64>,
    /// Penalty level used in each window (`None` for OLS).
    pub lambda1: Vec<Option<f64>>,
    pub lambda2: Vec<Option<f64>>,
}

impl ForecastRun {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    /// Checks that all sequences line up and that `d = L1 − L2` exactly.
    pub fn is_consistent(&self) -> bool {
        let n = self.len();
        let lens = [
            self.actual.len(),
            self.f1.len(),
            self.f2.len(),
            self.e1.len(),
            self.e2.len(),
            self.l1.len(),
            self.l2.len(),
            self.d.len(),
            self.lambda1.len(),
            self.lambda2.len(),
        ];
        lens.iter().all(|&l| l == n) && (0..n).all(|t| self.d[t] == self.l1[t] - self.l2[t])
    }

    /// `date,actual,f1,f2,e1,e2,L1,L2,d`, full precision.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), ForecastError> {
        let path = path.as_ref();
        let io = |source| ForecastError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut out = String::from("date,actual,f1,f2,e1,e2,L1,L2,d\n");
        for t in 0..self.len() {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                format_date(self.dates[t]),
                self.actual[t],
                self.f1[t],
                self.f2[t],
                self.e1[t],
                self.e2[t],
                self.l1[t],
                self.l2[t],
                self.d[t]
            ));
        }
        std::fs::write(path, out).map_err(io)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<(), ForecastError> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(|e| ForecastError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        std::fs::write(path, text + "\n").map_err(|source| ForecastError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self, ForecastError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ForecastError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let run: Self = serde_json::from_str(&text).map_err(|e| ForecastError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        if !run.is_consistent() {
            return Err(ForecastError::Parse {
                path: path.to_path_buf(),
                message: "sequence lengths or loss differentials disagree".into(),
            });
        }
        Ok(run)
    }

    /// Reads the loss columns back from a CSV written by [`ForecastRun::write_csv`].
    pub fn read_csv_columns(path: impl AsRef<Path>) -> Result<Vec<(NaiveDate, [f64; 8])>, ForecastError> {
        let path = path.as_ref();
        let parse_err = |message: String| ForecastError::Parse {
            path: path.to_path_buf(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|source| ForecastError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut out = Vec::new();
        for line in text.lines().skip(1).filter(|l| !l.is_empty()) {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != 9 {
                return Err(parse_err(format!("expected 9 fields, got {}", cells.len())));
            }
            let date = parse_date(cells[0]).map_err(|e| parse_err(e.to_string()))?;
            let mut vals = [0.0; 8];
            for (v, c) in vals.iter_mut().zip(&cells[1..]) {
                *v = c.parse().map_err(|_| parse_err(format!("bad number `{c}`")))?;
            }
            out.push((date, vals));
        }
        Ok(out)
    }
}

/// Mean squared error.
pub fn mspe(errors: &[f64]) -> Result<f64, ForecastError> {
    if errors.is_empty() {
        return Err(ForecastError::EmptySequence);
    }
    Ok(errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64)
}

struct WindowFit {
    forecast: f64,
    lambda: Option<f64>,
}

fn subset(design: &DesignMatrix, lo: usize, hi: usize) -> (DMatrix<f64>, DVector<f64>) {
    let x = design.x.rows(lo, hi - lo + 1).into_owned();
    let y = design.y.rows(lo, hi - lo + 1).into_owned();
    (x, y)
}

/// Penalty spec for one training window: adaptive weights come from a pilot on
/// the same standardized rows.
fn window_spec(choice: &ModelChoice, xs: &DMatrix<f64>, y: &DVector<f64>) -> Result<PenaltySpec, ShrinkageError> {
    let mut spec = choice.penalty_template();
    if choice.penalty == PenaltyKind::AdaptiveLasso {
        let pilot = pilot_coefficients(xs, y)?;
        spec.weights = Some(adaptive_weights(&pilot, choice.gamma));
    }
    Ok(spec)
}

fn train_bounds(cfg: &SchemeConfig, k: usize) -> (usize, usize) {
    let hi = k - cfg.horizon;
    let lo = match cfg.scheme {
        Scheme::Rolling => hi + 1 - cfg.window,
        Scheme::Expanding => 0,
    };
    (lo, hi)
}

fn cv_lambda(
    design: &DesignMatrix,
    choice: &ModelChoice,
    cfg: &SchemeConfig,
    k: usize,
) -> Result<Option<f64>, ShrinkageError> {
    if choice.penalty == PenaltyKind::None {
        return Ok(None);
    }
    let (lo, hi) = train_bounds(cfg, k);
    let (x, y) = subset(design, lo, hi);
    let st = standardize_dropping(&x, None).map_err(|_| ShrinkageError::SingularDesign)?;
    if st.kept.is_empty() {
        return Ok(Some(0.0));
    }
    let spec = window_spec(choice, &st.x, &y)?;
    Ok(Some(cross_validate(&st.x, &y, &spec, &choice.cv)?.best_lambda))
}

fn fit_window(
    design: &DesignMatrix,
    choice: &ModelChoice,
    cfg: &SchemeConfig,
    k: usize,
    lambda: Option<f64>,
) -> Result<WindowFit, ShrinkageError> {
    let (lo, hi) = train_bounds(cfg, k);
    debug_assert!(design.rows[hi] + design.horizon <= design.rows[k]);
    let (x, y) = subset(design, lo, hi);
    let st = standardize_dropping(&x, None).map_err(|_| ShrinkageError::SingularDesign)?;
    let row: Vec<f64> = design.x.row(k).iter().cloned().collect();
    let z = st.transform_row(&row);
    let forecast = if st.kept.is_empty() {
        y.mean()
    } else {
        let spec = window_spec(choice, &st.x, &y)?.with_lambda(lambda.unwrap_or(0.0));
        let fit = fit_penalized(&st.x, &y, &spec, &choice.cv.solver)?;
        fit.predict_row(&z)
    };
    let forecast = if cfg.floor_zero { forecast.max(0.0) } else { forecast };
    Ok(WindowFit { forecast, lambda })
}

/// Forecasts of one model at every origin, in time order.
fn model_path(
    panel: &RealizedPanel,
    firm: &str,
    choice: &ModelChoice,
    cfg: &SchemeConfig,
) -> Result<(DesignMatrix, Vec<WindowFit>), ForecastError> {
    let design = build_design(panel, firm, &choice.spec(cfg.horizon), None)?;
    let usable = design.n_rows();
    let n = cfg.n_forecasts(usable);
    if n == 0 {
        return Err(ForecastError::InsufficientWindow {
            usable,
            window: cfg.window,
            horizon: cfg.horizon,
        });
    }
    let first = cfg.window + cfg.horizon - 1;
    let origins: Vec<usize> = (first..usable).collect();
    let fit_err = |k: usize| {
        let date = design.dates[k];
        move |source| ForecastError::Fit {
            firm: firm.to_string(),
            date,
            source,
        }
    };

    // λ is cross-validated on anchor windows only, then shared by the
    // windows up to the next anchor.
    let anchors: Vec<usize> = origins.iter().step_by(cfg.cv_refresh).cloned().collect();
    let lambdas: Vec<Option<f64>> = anchors
        .par_iter()
        .map(|&k| cv_lambda(&design, choice, cfg, k).map_err(fit_err(k)))
        .collect::<Result<_, _>>()?;
    let fits: Vec<WindowFit> = origins
        .par_iter()
        .enumerate()
        .map(|(i, &k)| fit_window(&design, choice, cfg, k, lambdas[i / cfg.cv_refresh]).map_err(fit_err(k)))
        .collect::<Result<_, _>>()?;
    Ok((design, fits))
}

/// Runs the benchmark and the alternative model for one firm.
pub fn run_scheme(
    panel: &RealizedPanel,
    firm: &str,
    bench: &ModelChoice,
    model: &ModelChoice,
    cfg: &SchemeConfig,
) -> Result<ForecastRun, ForecastError> {
    cfg.validate()?;
    let (r1, r2) = rayon::join(
        || model_path(panel, firm, bench, cfg),
        || model_path(panel, firm, model, cfg),
    );
    let (design, p1) = r1?;
    let (_, p2) = r2?;
    let first = cfg.window + cfg.horizon - 1;
    let idx: Vec<usize> = (first..design.n_rows()).collect();
    let actual: Vec<f64> = idx.iter().map(|&k| design.y[k]).collect();
    let f1: Vec<f64> = p1.iter().map(|w| w.forecast).collect();
    let f2: Vec<f64> = p2.iter().map(|w| w.forecast).collect();
    let e1: Vec<f64> = actual.iter().zip(&f1).map(|(a, f)| a - f).collect();
    let e2: Vec<f64> = actual.iter().zip(&f2).map(|(a, f)| a - f).collect();
    let l1: Vec<f64> = e1.iter().map(|&e| cfg.loss.apply(e)).collect();
    let l2: Vec<f64> = e2.iter().map(|&e| cfg.loss.apply(e)).collect();
    let d = l1.iter().zip(&l2).map(|(a, b)| a - b).collect();
    Ok(ForecastRun {
        firm: firm.to_string(),
        bench: bench.label(),
        model: model.label(),
        scheme: cfg.scheme,
        window: cfg.window,
        horizon: cfg.horizon,
        loss: cfg.loss,
        dates: idx.iter().map(|&k| design.dates[k]).collect(),
        actual,
        f1,
        f2,
        e1,
        e2,
        l1,
        l2,
        d,
        lambda1: p1.iter().map(|w| w.lambda).collect(),
        lambda2: p2.iter().map(|w| w.lambda).collect(),
    })
}

/// [`run_scheme`] for several firms, returned in the order given.
pub fn run_panel(
    panel: &RealizedPanel,
    firms: &[String],
    bench: &ModelChoice,
    model: &ModelChoice,
    cfg: &SchemeConfig,
) -> Result<Vec<ForecastRun>, ForecastError> {
    firms
        .par_iter()
        .map(|f| run_scheme(panel, f, bench, model, cfg))
        .collect()
}
