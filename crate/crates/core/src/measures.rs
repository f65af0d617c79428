//! Daily realized measures built from one day of intraday log-returns, and the
//! equal-weight temporal filters used by the HAR regressors and targets.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// E|Z| for a standard normal Z, √(2/π).
pub const MU1: f64 = 0.797_884_560_802_865_4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error("no intraday returns for the day")]
    EmptyDay,
    #[error("bipower variation needs at least 2 intraday returns, got {0}")]
    TooFewIntraday(usize),
    #[error("averaging window {window} exceeds series length {len}")]
    WindowExceedsSeries { window: usize, len: usize },
    #[error("averaging window must be at least 1")]
    ZeroWindow,
}

/// The four daily measures of one (firm, day).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureSet {
    pub rv: f64,
    pub bpv: f64,
    pub rq: f64,
    pub jump: f64,
}

impl MeasureSet {
    pub fn from_returns(returns: &[f64]) -> Result<Self, MeasureError> {
        let rv = compute_rv(returns)?;
        let bpv = compute_bpv(returns)?;
        let rq = compute_rq(returns)?;
        Ok(Self {
            rv,
            bpv,
            rq,
            jump: compute_jump(rv, bpv),
        })
    }
}

/// Realized variance: Σ r².
pub fn compute_rv(returns: &[f64]) -> Result<f64, MeasureError> {
    if returns.is_empty() {
        return Err(MeasureError::EmptyDay);
    }
    Ok(returns.iter().map(|r| r * r).sum())
}

/// Bipower variation μ₁⁻² Σ |rᵢ||rᵢ₊₁|.
///
/// The μ₁⁻² = π/2 scaling makes the estimator consistent for integrated variance.
pub fn compute_bpv(returns: &[f64]) -> Result<f64, MeasureError> {
    if returns.len() < 2 {
        return Err(MeasureError::TooFewIntraday(returns.len()));
    }
    let s: f64 = returns.windows(2).map(|w| w[0].abs() * w[1].abs()).sum();
    Ok(s / (MU1 * MU1))
}

/// Realized quarticity (M/3) Σ r⁴.
pub fn compute_rq(returns: &[f64]) -> Result<f64, MeasureError> {
    if returns.is_empty() {
        return Err(MeasureError::EmptyDay);
    }
    let m = returns.len() as f64;
    Ok(m / 3.0 * returns.iter().map(|r| r.powi(4)).sum::<f64>())
}

/// Jump variation, truncated at zero.
pub fn compute_jump(rv: f64, bpv: f64) -> f64 {
    (rv - bpv).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AverageMode {
    /// Mean of the current value and the `window - 1` before it.
    Trailing,
    /// Mean of the next `window` values (current excluded).
    Forward,
}

/// Equal-weight moving average. Positions without full support are `None`.
pub fn temporal_average(series: &[f64], window: usize, mode: AverageMode) -> Result<Vec<Option<f64>>, MeasureError> {
    if window == 0 {
        return Err(MeasureError::ZeroWindow);
    }
    let n = series.len();
    let needed = match mode {
        AverageMode::Trailing => window,
        AverageMode::Forward => window + 1,
    };
    if needed > n {
        return Err(MeasureError::WindowExceedsSeries { window, len: n });
    }
    let w = window as f64;
    let out = (0..n)
        .map(|t| match mode {
            AverageMode::Trailing if t + 1 >= window => Some(series[t + 1 - window..=t].iter().sum::<f64>() / w),
            AverageMode::Forward if t + window < n => Some(series[t + 1..=t + window].iter().sum::<f64>() / w),
            _ => None,
        })
        .collect();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rv_examples() {
        let rv = compute_rv(&[0.01, -0.02, 0.01]).unwrap();
        assert!((rv - 0.0006).abs() < 1e-18);
        assert_eq!(compute_rv(&[0.0; 5]).unwrap(), 0.0);
        assert_eq!(compute_rv(&[]), Err(MeasureError::EmptyDay));
    }

    #[test]
    fn bpv_constant_magnitude_closed_form() {
        let c = 0.003;
        let m = 78;
        let r: Vec<f64> = (0..m).map(|i| if i % 3 == 0 { -c } else { c }).collect();
        let expected = (m as f64 - 1.0) * c * c / (MU1 * MU1);
        assert!((compute_bpv(&r).unwrap() - expected).abs() < 1e-15);
        assert_eq!(compute_bpv(&[0.0; 4]).unwrap(), 0.0);
        assert_eq!(compute_bpv(&[0.1]), Err(MeasureError::TooFewIntraday(1)));
    }

    #[test]
    fn mu1_is_sqrt_two_over_pi() {
        assert!((MU1 - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-16);
    }

    #[test]
    fn rq_examples() {
        let rq = compute_rq(&[0.1, 0.1, 0.1]).unwrap();
        assert!((rq - 3e-4).abs() < 1e-18);
        assert_eq!(compute_rq(&[0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn jump_examples() {
        assert_eq!(compute_jump(2.0, 1.5), 0.5);
        assert_eq!(compute_jump(1.0, 2.0), 0.0);
        assert_eq!(compute_jump(0.0, 0.0), 0.0);
    }

    #[test]
    fn trailing_and_forward_windows() {
        let s = [1.0, 2.0, 3.0, 4.0, 5.0];
        let tr = temporal_average(&s, 5, AverageMode::Trailing).unwrap();
        assert_eq!(tr[4], Some(3.0));
        assert!(tr[..4].iter().all(Option::is_none));

        let fw = temporal_average(&s, 1, AverageMode::Forward).unwrap();
        assert_eq!(fw, vec![Some(2.0), Some(3.0), Some(4.0), Some(5.0), None]);

        let c = [2.5; 30];
        for l in [1, 5, 22] {
            let a = temporal_average(&c, l, AverageMode::Trailing).unwrap();
            assert!(a.iter().flatten().all(|&v| (v - 2.5).abs() < 1e-15));
            assert_eq!(a.iter().flatten().count(), 30 - l + 1);
        }
        assert_eq!(
            temporal_average(&s, 6, AverageMode::Trailing),
            Err(MeasureError::WindowExceedsSeries { window: 6, len: 5 })
        );
        assert_eq!(
            temporal_average(&s, 0, AverageMode::Trailing),
            Err(MeasureError::ZeroWindow)
        );
    }

    #[test]
    fn rq_is_zero_iff_all_returns_zero() {
        assert_eq!(compute_rq(&[0.0, 0.0, 0.0]).unwrap(), 0.0);
        assert!(compute_rq(&[0.0, 1e-3, 0.0]).unwrap() > 0.0);
    }

    proptest! {
        #[test]
        fn scale_equivariance(r in prop::collection::vec(-0.05f64..0.05, 2..60), a in 0.1f64..10.0) {
            let scaled: Vec<f64> = r.iter().map(|x| a * x).collect();
            let base = MeasureSet::from_returns(&r).unwrap();
            let s = MeasureSet::from_returns(&scaled).unwrap();
            let close = |x: f64, y: f64| (x - y).abs() <= 1e-12 * (1.0 + x.abs().max(y.abs()));
            prop_assert!(close(s.rv, a * a * base.rv));
            prop_assert!(close(s.bpv, a * a * base.bpv));
            prop_assert!(close(s.rq, a.powi(4) * base.rq));
            prop_assert!((s.jump - a * a * base.jump).abs() <= 1e-12 * (1.0 + s.rv));
        }

        #[test]
        fn jump_is_non_negative(r in prop::collection::vec(-0.05f64..0.05, 2..60)) {
            let m = MeasureSet::from_returns(&r).unwrap();
            prop_assert!(m.jump >= 0.0);
            if m.bpv >= m.rv {
                prop_assert_eq!(m.jump, 0.0);
            }
        }

        #[test]
        fn temporal_average_is_linear(
            a in prop::collection::vec(-5.0f64..5.0, 25..40),
            b_scale in -3.0f64..3.0,
            l in 1usize..23,
        ) {
            let b: Vec<f64> = a.iter().rev().cloned().collect();
            let combo: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + b_scale * y).collect();
            for mode in [AverageMode::Trailing, AverageMode::Forward] {
                let ta = temporal_average(&a, l, mode).unwrap();
                let tb = temporal_average(&b, l, mode).unwrap();
                let tc = temporal_average(&combo, l, mode).unwrap();
                for i in 0..a.len() {
                    match (ta[i], tb[i], tc[i]) {
                        (Some(x), Some(y), Some(z)) => prop_assert!((z - (x + b_scale * y)).abs() < 1e-10),
                        (None, None, None) => {}
                        _ => prop_assert!(false, "support mismatch at {}", i),
                    }
                }
            }
        }
    }
}
