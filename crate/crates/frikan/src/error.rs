//! Crate-wide error type.

use thiserror::Error;

use crate::optim::FitTrace;

/// Errors produced by dataset handling, model evaluation, fitting and the
/// symbolic pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied value violates a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A serialized artifact (checkpoint, expression, CSV) does not match the
    /// expected structure. `field` names the offending location.
    #[error("format error at {field}: {message}")]
    Format { field: String, message: String },

    /// The loss became non-finite during optimization. Carries the last
    /// finite recording so callers can inspect how far the fit got.
    #[error("optimization diverged at iteration {iteration}: loss became non-finite")]
    Diverged { iteration: usize, trace: FitTrace },

    /// Pruning removed every path between the inputs and an output.
    #[error("over-pruned: {0}")]
    OverPruned(String),

    /// A symbolic expression was evaluated outside its domain.
    #[error("domain error: {message} in {context}")]
    Domain { message: String, context: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn format(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format { field: field.into(), message: message.into() }
    }
}
