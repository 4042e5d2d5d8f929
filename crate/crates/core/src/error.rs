use thiserror::Error;

use crate::instances::ShiftKind;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid integration range [{lo}, {hi}]")]
    InvalidRange { lo: f64, hi: f64 },

    #[error("invalid piecewise-linear function: {0}")]
    InvalidFunction(String),

    #[error("invalid density: {0}")]
    InvalidDensity(String),

    /// `q` vanishes somewhere `p` carries mass, so `KL(p || q)` diverges.
    #[error("KL divergence is infinite: q = 0 where p > 0 near x = {at}")]
    InfiniteDivergence { at: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("operation requires a {expected} dataset or instance")]
    WrongScenario { expected: ShiftKind },

    #[error("rate undefined: {0}")]
    RateUndefined(String),

    #[error("configuration error: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error("internal consistency violation: {0}")]
    Internal(String),
}
