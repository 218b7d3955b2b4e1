use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside its admissible domain.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// The closed-form event probabilities assume a decoding threshold of at
    /// least one, i.e. an encoding rate R >= 1. Lower rates are only
    /// supported by the simulation backend.
    #[error("closed-form model requires rate >= 1 (got {rate}); use the simulation backend for lower rates")]
    AnalyticalDomain { rate: f64 },

    /// A linear-algebra step failed beyond what reducibility handling covers.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
