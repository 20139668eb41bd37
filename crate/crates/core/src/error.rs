use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Inputs violate a documented precondition or the standing hypotheses.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// A closed form or a constrained set is degenerate at the given point.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("{what} did not converge within {iters} iterations")]
    NotConverged { what: String, iters: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub(crate) fn not_converged(what: impl Into<String>, iters: usize) -> Self {
        Error::NotConverged {
            what: what.into(),
            iters,
        }
    }

    /// True for errors caused by bad input rather than by a failed computation.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Invalid(_) | Error::Json(_) | Error::Io(_))
    }
}
