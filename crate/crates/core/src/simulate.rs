//! Data-generating processes and Monte Carlo harnesses.
//!
//! Time is measured in trading days. Intraday paths are Euler discretizations of
//! a jump diffusion on a grid of `M` steps per day; HAR panels follow the linear
//! cross-sectional HAR recursion with Gaussian innovations.

use chrono::{Datelike, Days, NaiveDate, Weekday};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::epa::{cw_test, dm_test, gw_test, EpaError, GwInstruments, TestKind};
use crate::forecast::Scheme;
use crate::panel::{DataError, IntradayPanel, RealizedPanel, MONTHLY_WINDOW, WEEKLY_WINDOW};

/// Blow-up threshold relative to the burn-in median.
pub const EXPLOSION_FACTOR: f64 = 1e6;
pub const DEFAULT_BURN_IN: usize = 500;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("HAR dynamics are explosive for firm {firm}")]
    ExplosiveDynamics { firm: String },
    #[error("simulated RV of firm {firm} turned negative on day {day}; raise the intercepts or lower the noise")]
    NegativeRv { firm: String, day: usize },
    #[error(transparent)]
    Panel(#[from] DataError),
    #[error(transparent)]
    Test(#[from] EpaError),
}

/// Well-mixed 64-bit seed for a sub-stream.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finalizer applied to the combined value.
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `n` consecutive weekdays starting 2000-01-03.
pub fn business_days(n: usize) -> Vec<NaiveDate> {
    let mut d = NaiveDate::from_ymd_opt(2000, 1, 3).expect("valid date");
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d + Days::new(1);
    }
    out
}

/// Zero-padded firm labels that sort in index order.
pub fn firm_names(n: usize) -> Vec<String> {
    let width = n.to_string().len().max(2);
    (1..=n).map(|i| format!("F{i:0width$}")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum VolModel {
    /// Constant spot variance per day.
    Constant { variance: f64 },
    /// `dv = κ(θ − v)dt + ξ√v dW`, fully truncated at zero.
    SquareRoot { kappa: f64, theta: f64, xi: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpConfig {
    pub n_firms: usize,
    pub n_days: usize,
    /// Intraday steps per day.
    pub m: usize,
    /// Drift per day.
    pub drift: f64,
    pub vol: VolModel,
    /// Expected number of jumps per day.
    pub jump_intensity: f64,
    /// Standard deviation of the mean-zero normal jump sizes.
    pub jump_sd: f64,
    pub seed: u64,
}

impl DgpConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidConfig(m.to_string()));
        if self.n_firms == 0 || self.n_days == 0 {
            return bad("need at least one firm and one day");
        }
        if self.m < 2 {
            return bad("need at least 2 intraday steps");
        }
        if !self.drift.is_finite() || !(self.jump_intensity >= 0.0) || !(self.jump_sd >= 0.0) {
            return bad("drift must be finite, jump intensity and size sd non-negative");
        }
        match self.vol {
            VolModel::Constant { variance } if !(variance >= 0.0) => bad("variance must be non-negative"),
            VolModel::SquareRoot { kappa, theta, xi } if !(kappa > 0.0 && theta > 0.0 && xi > 0.0) => {
                bad("square-root parameters must be positive")
            }
            _ => Ok(()),
        }
    }

    /// Named parameter sets used by the command line. The values are our own
    /// choices, expressed in daily percentage units.
    pub fn preset(name: &str) -> Result<Self, SimError> {
        let sv = VolModel::SquareRoot {
            kappa: 0.05,
            theta: 1.0,
            xi: 0.2,
        };
        let base = Self {
            n_firms: 10,
            n_days: 1500,
            m: 390,
            drift: 0.0,
            vol: sv,
            jump_intensity: 0.0,
            jump_sd: 0.0,
            seed: 7,
        };
        match name {
            "sv" => Ok(base),
            "sv-jumps" => Ok(Self {
                jump_intensity: 0.1,
                jump_sd: 0.5,
                ..base
            }),
            "constant" => Ok(Self {
                vol: VolModel::Constant { variance: 1.0 },
                ..base
            }),
            "constant-jumps" => Ok(Self {
                vol: VolModel::Constant { variance: 1.0 },
                jump_intensity: 0.1,
                jump_sd: 0.5,
                ..base
            }),
            _ => Err(SimError::InvalidConfig(format!(
                "unknown preset `{name}` (expected sv, sv-jumps, constant, constant-jumps)"
            ))),
        }
    }
}

/// Exact discretized daily variation of a simulated path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathTruth {
    /// Σ σ² Δ per firm and day.
    pub iv: Vec<Vec<f64>>,
    /// Σ κ² per firm and day.
    pub jv: Vec<Vec<f64>>,
    pub jump_counts: Vec<Vec<u32>>,
}

struct FirmPath {
    returns: Vec<Vec<f64>>,
    iv: Vec<f64>,
    jv: Vec<f64>,
    counts: Vec<u32>,
}

fn simulate_firm(cfg: &DgpConfig, firm: usize) -> FirmPath {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, firm as u64));
    let dt = 1.0 / cfg.m as f64;
    let sqrt_dt = dt.sqrt();
    let jumps = (cfg.jump_intensity > 0.0).then(|| Poisson::new(cfg.jump_intensity * dt).expect("positive rate"));
    let jump_size = Normal::new(0.0, cfg.jump_sd).expect("non-negative sd");
    let mut v = match cfg.vol {
        VolModel::Constant { variance } => variance,
        VolModel::SquareRoot { theta, .. } => theta,
    };
    let mut out = FirmPath {
        returns: Vec::with_capacity(cfg.n_days),
        iv: Vec::with_capacity(cfg.n_days),
        jv: Vec::with_capacity(cfg.n_days),
        counts: Vec::with_capacity(cfg.n_days),
    };
    for _ in 0..cfg.n_days {
        let mut day = Vec::with_capacity(cfg.m);
        let (mut iv, mut jv, mut count) = (0.0, 0.0, 0u32);
        for _ in 0..cfg.m {
            let var = v.max(0.0);
            let z: f64 = rng.sample(StandardNormal);
            let mut r = cfg.drift * dt + (var * dt).sqrt() * z;
            iv += var * dt;
            if let Some(p) = &jumps {
                let k = p.sample(&mut rng) as u32;
                for _ in 0..k {
                    let size = jump_size.sample(&mut rng);
                    r += size;
                    jv += size * size;
                }
                count += k;
            }
            if let VolModel::SquareRoot { kappa, theta, xi } = cfg.vol {
                let zv: f64 = rng.sample(StandardNormal);
                v += kappa * (theta - var) * dt + xi * var.sqrt() * sqrt_dt * zv;
            }
            day.push(r);
        }
        out.returns.push(day);
        out.iv.push(iv);
        out.jv.push(jv);
        out.counts.push(count);
    }
    out
}

/// Simulates intraday returns for every firm, each from its own derived seed.
pub fn simulate_paths(cfg: &DgpConfig) -> Result<(IntradayPanel, PathTruth), SimError> {
    cfg.validate()?;
    let paths: Vec<FirmPath> = (0..cfg.n_firms)
        .into_par_iter()
        .map(|f| simulate_firm(cfg, f))
        .collect();
    let mut truth = PathTruth {
        iv: Vec::with_capacity(cfg.n_firms),
        jv: Vec::with_capacity(cfg.n_firms),
        jump_counts: Vec::with_capacity(cfg.n_firms),
    };
    let mut returns = Vec::with_capacity(cfg.n_firms);
    for p in paths {
        returns.push(p.returns);
        truth.iv.push(p.iv);
        truth.jv.push(p.jv);
        truth.jump_counts.push(p.counts);
    }
    let panel = IntradayPanel::new(firm_names(cfg.n_firms), business_days(cfg.n_days), returns)?;
    Ok((panel, truth))
}

/// Cross-sectional HAR panel: `RV_{i,t+1} = c_i + Σ_j φ_ij' X_{j,t} + ε_{i,t+1}`
/// with `X_{j,t} = (RV_{j,t}, RV^w_{j,t}, RV^m_{j,t})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarPanelConfig {
    pub n_days: usize,
    pub intercepts: Vec<f64>,
    /// `N × 3N` loadings, firm-major columns (daily, weekly, monthly).
    pub phi: DMatrix<f64>,
    pub noise_sd: f64,
    pub burn_in: usize,
    pub seed: u64,
}

impl HarPanelConfig {
    pub fn n_firms(&self) -> usize {
        self.intercepts.len()
    }

    fn validate(&self) -> Result<(), SimError> {
        let n = self.n_firms();
        let bad = |m: String| Err(SimError::InvalidConfig(m));
        if n == 0 || self.n_days == 0 {
            return bad("need at least one firm and one day".into());
        }
        if self.phi.shape() != (n, 3 * n) {
            return bad(format!("loadings must be {n}×{}, got {:?}", 3 * n, self.phi.shape()));
        }
        if !(self.noise_sd >= 0.0) || self.phi.iter().chain(&self.intercepts).any(|v| !v.is_finite()) {
            return bad("loadings, intercepts and noise must be finite, noise non-negative".into());
        }
        Ok(())
    }

    /// Own-firm HAR loadings `(βd, βw, βm)` for every firm, no spillovers.
    pub fn diagonal(n_firms: usize, n_days: usize, c: f64, beta: [f64; 3], noise_sd: f64, seed: u64) -> Self {
        let mut phi = DMatrix::zeros(n_firms, 3 * n_firms);
        for i in 0..n_firms {
            for (k, b) in beta.iter().enumerate() {
                phi[(i, 3 * i + k)] = *b;
            }
        }
        Self {
            n_days,
            intercepts: vec![c; n_firms],
            phi,
            noise_sd,
            burn_in: DEFAULT_BURN_IN,
            seed,
        }
    }
}

/// True coefficients of the simulated panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarPanelTruth {
    pub intercepts: Vec<f64>,
    pub phi: DMatrix<f64>,
}

fn mean_of(s: &[f64]) -> f64 {
    s.iter().sum::<f64>() / s.len() as f64
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Generates the HAR panel, discarding `burn_in` leading days.
pub fn simulate_har_panel(cfg: &HarPanelConfig) -> Result<(RealizedPanel, HarPanelTruth), SimError> {
    cfg.validate()?;
    let n = cfg.n_firms();
    let total = cfg.burn_in + cfg.n_days;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, u64::MAX));
    let names = firm_names(n);
    // Pre-sample days are held at the intercepts.
    let pre = MONTHLY_WINDOW;
    let mut rv: Vec<Vec<f64>> = cfg.intercepts.iter().map(|&c| vec![c; pre]).collect();
    let mut x = vec![0.0; 3 * n];
    for t in pre..pre + total {
        for j in 0..n {
            let s = &rv[j];
            x[3 * j] = s[t - 1];
            x[3 * j + 1] = mean_of(&s[t - WEEKLY_WINDOW..t]);
            x[3 * j + 2] = mean_of(&s[t - MONTHLY_WINDOW..t]);
        }
        for i in 0..n {
            let eps: f64 = rng.sample(StandardNormal);
            let mean: f64 = cfg.intercepts[i] + (0..3 * n).map(|k| cfg.phi[(i, k)] * x[k]).sum::<f64>();
            let v = mean + cfg.noise_sd * eps;
            if !v.is_finite() {
                return Err(SimError::ExplosiveDynamics { firm: names[i].clone() });
            }
            rv[i].push(v);
        }
        if t + 1 == pre + cfg.burn_in {
            for (i, s) in rv.iter().enumerate() {
                let burn = &s[pre..];
                let med = median(burn.iter().map(|v| v.abs()).collect());
                if burn.iter().any(|v| v.abs() > EXPLOSION_FACTOR * med) {
                    return Err(SimError::ExplosiveDynamics { firm: names[i].clone() });
                }
            }
        }
    }
    let kept: Vec<Vec<f64>> = rv.into_iter().map(|s| s[pre + cfg.burn_in..].to_vec()).collect();
    for (i, s) in kept.iter().enumerate() {
        if let Some(day) = s.iter().position(|v| *v < 0.0) {
            return Err(SimError::NegativeRv {
                firm: names[i].clone(),
                day,
            });
        }
    }
    let panel = RealizedPanel::from_rv(names, business_days(cfg.n_days), kept)?;
    Ok((
        panel,
        HarPanelTruth {
            intercepts: cfg.intercepts.clone(),
            phi: cfg.phi.clone(),
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Hypothesis {
    /// Equal expected loss.
    Null,
    /// The second forecast has `mspe_ratio` times the benchmark MSPE.
    Alternative { mspe_ratio: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub hypothesis: Hypothesis,
    pub tests: Vec<TestKind>,
    pub reps: usize,
    pub alpha: f64,
    /// Out-of-sample length of each replication.
    pub n: usize,
    /// Rolling estimation window of the nested design.
    pub window: usize,
    pub instruments: GwInstruments,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn new(hypothesis: Hypothesis, reps: usize, seed: u64) -> Self {
        Self {
            hypothesis,
            tests: vec![TestKind::Dm, TestKind::Cw, TestKind::Gw],
            reps,
            alpha: 0.05,
            n: 500,
            window: 100,
            instruments: GwInstruments::LaggedLoss,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionRow {
    pub test: TestKind,
    pub reps: usize,
    pub rejections: usize,
    pub rate: f64,
    /// 95% Wilson interval of the rejection probability.
    pub ci_low: f64,
    pub ci_high: f64,
}

fn wilson(k: usize, n: usize) -> (f64, f64) {
    let z = 1.959_963_984_540_054;
    let (k, n) = (k as f64, n as f64);
    let p = k / n;
    let denom = 1.0 + z * z / n;
    let centre = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Non-nested pair with exchangeable errors under the null: returns (L1, L2).
fn exchangeable_losses(rng: &mut ChaCha8Rng, n: usize, hyp: Hypothesis) -> (Vec<f64>, Vec<f64>) {
    let ratio = match hyp {
        Hypothesis::Null => 1.0,
        Hypothesis::Alternative { mspe_ratio } => mspe_ratio,
    };
    let s2 = ratio.sqrt();
    (0..n)
        .map(|_| {
            let e1: f64 = rng.sample(StandardNormal);
            let e2: f64 = rng.sample::<f64, _>(StandardNormal) * s2;
            (e1 * e1, e2 * e2)
        })
        .unzip()
}

/// Nested pair: model 1 forecasts zero, model 2 regresses y on x over a rolling
/// window. Returns (e1, e2, f1, f2).
fn nested_errors(rng: &mut ChaCha8Rng, n: usize, window: usize, hyp: Hypothesis) -> [Vec<f64>; 4] {
    let beta = match hyp {
        Hypothesis::Null => 0.0,
        // MSPE ratio 1/(1 + β²) with unit-variance x and noise.
        Hypothesis::Alternative { mspe_ratio } => (1.0 / mspe_ratio - 1.0).max(0.0).sqrt(),
    };
    let total = window + n;
    let x: Vec<f64> = (0..total).map(|_| rng.sample(StandardNormal)).collect();
    let y: Vec<f64> = x
        .iter()
        .map(|xi| beta * xi + rng.sample::<f64, _>(StandardNormal))
        .collect();
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for t in 0..window {
        sxx += x[t] * x[t];
        sxy += x[t] * y[t];
    }
    let mut out = [vec![], vec![], vec![], vec![]];
    for t in window..total {
        let f2 = sxy / sxx * x[t];
        out[0].push(y[t]);
        out[1].push(y[t] - f2);
        out[2].push(0.0);
        out[3].push(f2);
        sxx += x[t] * x[t] - x[t - window] * x[t - window];
        sxy += x[t] * y[t] - x[t - window] * y[t - window];
    }
    out
}

/// Empirical rejection frequencies of the selected tests.
///
/// DM and GW are applied to a non-nested pair of forecasts; CW to a nested
/// pair whose larger model is re-estimated on a rolling window.
pub fn size_power_experiment(cfg: &ExperimentConfig) -> Result<Vec<RejectionRow>, SimError> {
    if cfg.reps == 0 || cfg.n < 20 || cfg.window < 2 {
        return Err(SimError::InvalidConfig("need reps ≥ 1, n ≥ 20 and window ≥ 2".into()));
    }
    if !(cfg.alpha > 0.0 && cfg.alpha <= 1.0) {
        return Err(SimError::InvalidConfig(format!(
            "alpha must lie in (0, 1], got {}",
            cfg.alpha
        )));
    }
    let per_rep: Vec<Vec<bool>> = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| -> Result<Vec<bool>, SimError> {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, rep as u64));
            let (l1, l2) = exchangeable_losses(&mut rng, cfg.n, cfg.hypothesis);
            let [e1, e2, f1, f2] = nested_errors(&mut rng, cfg.n, cfg.window, cfg.hypothesis);
            cfg.tests
                .iter()
                .map(|t| {
                    let r = match t {
                        TestKind::Dm => dm_test(&l1, &l2, 1)?,
                        TestKind::Cw => cw_test(&e1, &e2, &f1, &f2, 1)?,
                        TestKind::Gw => {
                            let d: Vec<f64> = l1.iter().zip(&l2).map(|(a, b)| a - b).collect();
                            gw_test(&d, cfg.instruments, 1, Scheme::Rolling)?
                        }
                    };
                    Ok(r.p_value < cfg.alpha || cfg.alpha >= 1.0)
                })
                .collect()
        })
        .collect::<Result<_, _>>()?;
    Ok(cfg
        .tests
        .iter()
        .enumerate()
        .map(|(i, &test)| {
            let rejections = per_rep.iter().filter(|r| r[i]).count();
            let (ci_low, ci_high) = wilson(rejections, cfg.reps);
            RejectionRow {
                test,
                reps: cfg.reps,
                rejections,
                rate: rejections as f64 / cfg.reps as f64,
                ci_low,
                ci_high,
            }
        })
        .collect())
}
