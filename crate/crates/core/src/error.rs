use thiserror::Error;

use crate::cosim::frame::FrameError;

/// Errors produced anywhere in the engine.
#[derive(Debug, Error)]
pub enum Error {
    /// Structurally invalid configuration (duplicate DOFs, unknown case, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// A value violates a documented precondition (non-positive mass, dt <= 0, ...).
    #[error("validation error: {0}")]
    Validation(String),

    /// Non-finite or singular numerics. `step` is the loop index when known.
    #[error("numerical error at step {step:?}: {reason}")]
    Numerical { step: Option<usize>, reason: String },

    /// Geometry evaluated outside the carriage's operational envelope.
    #[error("domain error: {0}")]
    Domain(String),

    /// API misuse, e.g. querying a delay line backwards in time.
    #[error("usage error: {0}")]
    Usage(String),

    #[error("frame error: {0}")]
    Frame(#[from] FrameError),

    /// Co-simulation session failure; `last_good_step` is the last step that completed.
    #[error("session error after step {last_good_step:?}: {reason}")]
    Session {
        last_good_step: Option<u32>,
        reason: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn numerical(step: Option<usize>, reason: impl Into<String>) -> Self {
        Error::Numerical {
            step,
            reason: reason.into(),
        }
    }

    pub(crate) fn validation(reason: impl Into<String>) -> Self {
        Error::Validation(reason.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
