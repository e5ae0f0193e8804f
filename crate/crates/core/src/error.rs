use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("overlapping arc segments: boundary vertex {vertex} claimed by arcs {first} and {second}")]
    OverlappingArcs { vertex: usize, first: usize, second: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("field has {got} entries but the domain has {expected} vertices")]
    FieldLength { expected: usize, got: usize },

    #[error("linear system is singular: {0}")]
    Singular(String),

    #[error("calibration failed: {0}")]
    CalibrationFailed(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
