use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Cholesky failed even after the largest jitter was applied.
    #[error("{what} is not positive definite (jitter exhausted)")]
    NotPositiveDefinite { what: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Argument outside the domain of a special function.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("optimization failed: {0}")]
    Optimization(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("model file error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn not_pd(what: impl Into<String>) -> Self {
        Error::NotPositiveDefinite { what: what.into() }
    }

    /// True for failures that come from the numerics rather than the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite { .. }
                | Error::Domain(_)
                | Error::Optimization(_)
                | Error::Fit(_)
        )
    }
}
