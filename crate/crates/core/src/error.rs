use thiserror::Error;

/// Errors raised by the key-length models, the simulators and scenario loading.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An input lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Inputs are individually valid but mutually inconsistent.
    #[error("inconsistent inputs: {0}")]
    Inconsistent(String),

    /// The multi-photon estimator denominator η − 3κ + 2κη is not positive.
    #[error("multi-photon estimator invalid: denominator {denominator:e} <= 0 (kappa {kappa:e}, eta {eta})")]
    EstimatorInvalid {
        kappa: f64,
        eta: f64,
        denominator: f64,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("no detections: {0}")]
    NoDetections(String),

    /// A security or protocol parameter violates its constraint chain.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// The decoy analysis cannot certify any single-photon contribution.
    #[error("decoy bounds collapsed: single-photon yield lower bound {y1_lower:e} <= 0")]
    BoundsCollapse { y1_lower: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {message}")]
    Io { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_probability(name: &str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} = {value} is not a probability")))
    }
}
