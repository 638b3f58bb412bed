use thiserror::Error;

use crate::config::ConfigError;
use crate::linalg::LinalgError;
use crate::matexpr::MatrixError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("at t = {t}: {source}")]
    AtTime {
        t: f64,
        #[source]
        source: Box<Error>,
    },
    #[error("projector identity `{identity}` violated: residual {residual:e} exceeds {limit:e}")]
    IdentityViolation { identity: &'static str, residual: f64, limit: f64 },
    #[error("non-finite state at integration step {step} (t = {t})")]
    NonFiniteState { step: usize, t: f64 },
    #[error("invalid system: {0}")]
    InvalidSpec(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
}

impl Error {
    pub(crate) fn at(t: f64) -> impl FnOnce(Error) -> Error {
        move |e| match e {
            e @ Error::AtTime { .. } => e,
            other => Error::AtTime { t, source: Box::new(other) },
        }
    }

    /// The innermost error, with time context stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtTime { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for problems with the input description itself (parse errors,
    /// inconsistent shapes, bad options) as opposed to numerical failures.
    pub fn is_input_error(&self) -> bool {
        match self.root() {
            Error::Config(_) | Error::InvalidSpec(_) => true,
            Error::Matrix(e) => !matches!(e, MatrixError::Eval { .. }),
            _ => false,
        }
    }
}
