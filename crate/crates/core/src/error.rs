//! Shared error type for all mesh simulation modules.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("matrix is not unitary: max deviation {max_dev:.3e} exceeds tolerance {tol:.3e}")]
    NotUnitary { max_dev: f64, tol: f64 },

    #[error("matrix is singular or rank-deficient")]
    Singular,

    #[error("permanent limited to dimension {max}, got {dim}")]
    PermanentTooLarge { dim: usize, max: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("range error: {0}")]
    Range(String),

    #[error("underdetermined fit: {samples} samples for {params} parameters")]
    Underdetermined { samples: usize, params: usize },

    #[error("fit did not converge (best rms {rms:.3e})")]
    FitNotConverged {
        rms: f64,
        /// Best parameters found before giving up.
        best: Box<crate::calibration::FitResult>,
    },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("parse error: {0}")]
    Parse(String),
}
