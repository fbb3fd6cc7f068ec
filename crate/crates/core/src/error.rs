use thiserror::Error;

use crate::linalg::LinalgError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid refinement: {0}")]
    InvalidRefinement(String),
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("internal inconsistency: {0}")]
    InternalInconsistency(String),
    #[error("invalid generator spec: {0}")]
    SpecInvalid(String),
    #[error("out of scope: {0}")]
    OutOfScope(String),
}

impl Error {
    pub fn is_numerical_failure(&self) -> bool {
        matches!(self, Error::Linalg(LinalgError::NumericalFailure(_)))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
