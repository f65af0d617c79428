use thiserror::Error;

use crate::epa::EpaError;
use crate::features::FeatureError;
use crate::forecast::ForecastError;
use crate::measures::MeasureError;
use crate::panel::DataError;
use crate::report::ReportError;
use crate::shrinkage::ShrinkageError;
use crate::simulate::SimError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse failure classes, used by the command line to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Shrinkage(#[from] ShrinkageError),
    #[error(transparent)]
    Forecast(#[from] ForecastError),
    #[error(transparent)]
    Epa(#[from] EpaError),
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error(transparent)]
    Report(#[from] ReportError),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Data(_) | Error::Measure(_) | Error::Report(_) => ErrorKind::Data,
            Error::Feature(e) => e.kind(),
            Error::Shrinkage(_) | Error::Epa(_) => ErrorKind::Numerical,
            Error::Forecast(e) => e.kind(),
            Error::Simulation(SimError::InvalidConfig(_)) => ErrorKind::Config,
            Error::Simulation(SimError::Panel(_)) => ErrorKind::Data,
            Error::Simulation(_) => ErrorKind::Numerical,
        }
    }
}
