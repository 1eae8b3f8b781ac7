use thiserror::Error;

/// Errors raised by the dynamics library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("tail mass {tail:e} exceeds the limit {limit:e}; renormalize explicitly to proceed")]
    TailMass { tail: f64, limit: f64 },

    #[error("moment is not finite: {0}")]
    NonFiniteMoment(String),

    #[error("reference measure is supported on a single point ({0}); the dynamics are deterministic")]
    SingletonSupport(f64),

    #[error("no sign change for {what} on [{lo}, {hi}]")]
    NoSignChange { what: &'static str, lo: f64, hi: f64 },

    #[error("{what} exceeded the cap of {cap} points")]
    Explosion { what: &'static str, cap: usize },

    #[error("lossy representation conversion rejected in strict mode: {0}")]
    StrictConversion(String),

    #[error("truncation mass {mass:e} exceeds {limit:e}")]
    Truncation { mass: f64, limit: f64 },

    #[error("grids are incompatible: {0}")]
    GridMismatch(String),

    #[error("support is not co-rational: {0}")]
    NotLattice(String),
}

pub type Result<T> = std::result::Result<T, Error>;
