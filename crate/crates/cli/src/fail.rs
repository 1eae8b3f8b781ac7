//! Exit codes and the machine-readable error record.

use std::fmt;

use absdyn_core::Error;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Other,
    Io,
    InvalidMeasure,
    Tolerance,
    Numerical,
}

impl Kind {
    pub fn code(self) -> i32 {
        match self {
            Kind::Other => 1,
            Kind::Io => 3,
            Kind::InvalidMeasure => 4,
            Kind::Tolerance => 5,
            Kind::Numerical => 6,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Failure {
    pub kind: Kind,
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn new(kind: Kind, message: impl Into<String>) -> Self {
        Failure { kind, code: kind.code(), message: message.into() }
    }

    pub fn io(what: &str, e: std::io::Error) -> Self {
        Failure::new(Kind::Io, format!("{what}: {e}"))
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let kind = match e {
            Error::InvalidMeasure(_)
            | Error::NonFiniteMoment(_)
            | Error::SingletonSupport(_)
            | Error::StrictConversion(_)
            | Error::GridMismatch(_)
            | Error::NotLattice(_) => Kind::InvalidMeasure,
            Error::TailMass { .. } | Error::Truncation { .. } => Kind::Tolerance,
            Error::NoSignChange { .. } | Error::Explosion { .. } => Kind::Numerical,
            Error::Domain(_) => Kind::Other,
        };
        Failure::new(kind, e.to_string())
    }
}

pub type Outcome<T> = std::result::Result<T, Failure>;
