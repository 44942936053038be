use std::fmt;

use thiserror::Error;

/// Which admissibility constraint a statistic vector violated.
#[derive(Debug, Clone, PartialEq)]
pub enum DomainViolation {
    /// Component mass at or below the empty-component floor.
    EmptyComponent { component: usize, mass: f64 },
    /// The covariance implied by the statistic is not positive definite.
    DegenerateCovariance,
    /// An entry is NaN or infinite.
    NonFinite { index: usize },
    /// Wrong number of entries for the model.
    DimensionMismatch { expected: usize, found: usize },
    /// Model-specific constraint with a free-form description.
    Other(String),
}

impl fmt::Display for DomainViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DomainViolation::EmptyComponent { component, mass } => {
                write!(f, "empty component {component} (mass {mass:e})")
            }
            DomainViolation::DegenerateCovariance => write!(f, "degenerate covariance"),
            DomainViolation::NonFinite { index } => write!(f, "non-finite entry at {index}"),
            DomainViolation::DimensionMismatch { expected, found } => {
                write!(f, "statistic has {found} entries, model expects {expected}")
            }
            DomainViolation::Other(msg) => f.write_str(msg),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("statistic outside the model domain: {0}")]
    Domain(DomainViolation),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("parse error at row {row}, column {col}: {msg}")]
    Parse { row: usize, col: usize, msg: String },

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<DomainViolation> for Error {
    fn from(v: DomainViolation) -> Self {
        Error::Domain(v)
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn argument(msg: impl Into<String>) -> Error {
    Error::Argument(msg.into())
}
