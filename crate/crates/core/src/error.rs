use thiserror::Error;

use crate::ztreg::Family;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: u64, msg: String },
    #[error("invalid record: {0}")]
    Validation(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("degenerate truncation: P(Y = 0) is numerically 1")]
    DegenerateTruncation,
    #[error("no missing prop_women values to impute")]
    NothingToImpute,
    #[error("{0:?} family is not supported here")]
    UnsupportedFamily(Family),
    #[error("model fit did not converge")]
    NotConverged,
    #[error("invalid strata: {0}")]
    InvalidStrata(String),
    #[error("every candidate model failed to fit")]
    AllFitsFailed,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
