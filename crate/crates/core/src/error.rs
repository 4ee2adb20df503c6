//! Crate-wide error type and the coarse classification used by callers
//! (notably the CLI exit-code contract).

use thiserror::Error;

/// Coarse failure class. The CLI maps these onto stable exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad inputs: schema, domain, argument, or validation failures.
    Validation,
    /// Numerical failures: singular systems, non-convergence, degenerate data.
    Numeric,
    /// Network / LLM endpoint failures.
    Transport,
    /// Filesystem and serialization failures.
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Data(#[from] crate::dataset::DataError),
    #[error(transparent)]
    Glm(#[from] crate::glm::GlmError),
    #[error(transparent)]
    Prior(#[from] crate::priors::PriorError),
    #[error(transparent)]
    Elicit(#[from] crate::elicit::ElicitError),
    #[error(transparent)]
    Bayes(#[from] crate::bayes::BayesError),
    #[error(transparent)]
    Eval(#[from] crate::eval::EvalError),
    #[error(transparent)]
    Cv(#[from] crate::cv::CvError),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Data(e) => e.class(),
            Error::Glm(e) => e.class(),
            Error::Prior(e) => e.class(),
            Error::Elicit(e) => e.class(),
            Error::Bayes(_) => ErrorClass::Numeric,
            Error::Eval(e) => e.class(),
            Error::Cv(e) => e.class(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
