//! Realized-volatility forecasting with cross-sectionally augmented HAR models.
//!
//! The crate covers the whole pipeline:
//!
//! - [`panel`]: CSV ingestion and calendar validation of intraday and daily panels.
//! - [`measures`]: realized variance, bipower variation, realized quarticity, jumps
//!   and the daily/weekly/monthly temporal filters.
//! - [`features`]: HAR-family design matrices (HAR, HARQ, HARQ-F, HAR-J, CHAR), own-firm
//!   or augmented with the whole cross-section.
//! - [`shrinkage`]: OLS, lasso, adaptive lasso and elastic net by cyclic coordinate
//!   descent, λ grids and blocked cross-validation.
//! - [`forecast`]: rolling/expanding pseudo out-of-sample forecasting.
//! - [`epa`]: Diebold–Mariano, Clark–West and Giacomini–White tests.
//! - [`simulate`]: jump-diffusion and HAR-panel data generators and Monte Carlo harnesses.
//! - [`report`]: summary and test tables in text, CSV and JSON.

pub mod epa;
pub mod error;
pub mod features;
pub mod forecast;
pub mod linalg;
pub mod measures;
pub mod panel;
pub mod report;
pub mod shrinkage;
pub mod simulate;

pub use error::{Error, ErrorKind, Result};
