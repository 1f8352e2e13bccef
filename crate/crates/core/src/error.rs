use std::path::PathBuf;

use thiserror::Error;

use crate::events::EventStream;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("mark {0} lies outside the mark space")]
    MarkOutOfSpace(f64),

    #[error("time {t} lies outside the observation window [0, {horizon}]")]
    TimeOutOfWindow { t: f64, horizon: f64 },

    #[error("simulation exceeded {limit} events before reaching the horizon")]
    Explosion {
        limit: usize,
        partial: Box<EventStream>,
    },

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("ground intensity is zero, mark density is undefined")]
    DegenerateDensity,

    #[error("event stream is empty")]
    EmptyStream,

    #[error("need {needed} events but the stream holds only {available}")]
    InsufficientEvents { needed: usize, available: usize },

    #[error("{0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
