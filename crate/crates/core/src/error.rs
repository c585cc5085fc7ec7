use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("grid mismatch: resolution {left} vs {right}")]
    GridMismatch { left: usize, right: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("stationarity: operator norm >= 1 (got {norm})")]
    NotStationary { norm: f64 },

    #[error("invertibility not certified: {0}")]
    NotInvertible(String),

    /// A covariance block that must be inverted is numerically singular.
    #[error("singular covariance at {step}: smallest eigenvalue {min_eig:e} (largest {max_eig:e})")]
    Singular { step: String, min_eig: f64, max_eig: f64 },

    #[error("not positive semidefinite: eigenvalue {0:e}")]
    NotPsd(f64),

    #[error("no convergence after {iterations} iterations (last change {change:e})")]
    NonConvergence { iterations: usize, change: f64 },

    #[error("lag {lag} not available (max lag {max_lag})")]
    LagOutOfRange { lag: i64, max_lag: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for failures that stem from the numerics rather than from the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Singular { .. } | Error::NonConvergence { .. } | Error::NotPsd(_)
        )
    }
}
