use thiserror::Error;

/// Direction in which a rate estimate ran into the edge of (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// Every individual carries zero rare variants.
    AllZero,
    /// Every individual carries a rare variant at every site.
    AllSaturated,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("maximum likelihood estimate lies on the boundary ({0:?})")]
    BoundaryMle(Boundary),

    #[error("mixture prior undefined: {0}")]
    MixtureUndefined(String),

    #[error("unsupported data shape: {0}")]
    UnsupportedShape(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
