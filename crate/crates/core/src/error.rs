use std::path::PathBuf;

use thiserror::Error;

use crate::solvers::IterationRecord;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The objective blew past the divergence guard. The history up to the
    /// failing iterate is attached so callers can inspect what happened.
    #[error("solver diverged at outer iteration {iteration}: objective {objective:e} exceeds limit {limit:e}")]
    Diverged {
        iteration: usize,
        objective: f64,
        limit: f64,
        history: Vec<IterationRecord>,
    },

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error on {}: {source}", path.display())]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("record format error on {}: {message}", path.display())]
    Records { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}
