//! Command line and HTTP front ends over `atlas-core`.

pub mod analysis;
pub mod backend;
pub mod cli;
pub mod config;
pub mod service;

use std::path::PathBuf;

use atlas_core::Error;
use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    BadQuery(String),
    #[error("no corpus named {0:?}")]
    UnknownCorpus(String),
    #[error("a corpus named {0:?} is already registered")]
    DuplicateCorpus(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Internal(String),
}

impl AppError {
    /// Stable, machine-readable error name.
    pub fn name(&self) -> &'static str {
        match self {
            AppError::Core(e) => e.name(),
            AppError::Usage(_) => "UsageError",
            AppError::Config(_) => "ConfigError",
            AppError::BadQuery(_) => "BadQuery",
            AppError::UnknownCorpus(_) => "UnknownCorpus",
            AppError::DuplicateCorpus(_) => "DuplicateCorpus",
            AppError::Io { .. } => "IoError",
            AppError::Internal(_) => "InternalError",
        }
    }

    /// HTTP status for this error: 404 for unknown corpora and images, 400
    /// for malformed requests, 422 for analyses that are undefined on the
    /// data, 409 for a clashing registration.
    pub fn status(&self) -> u16 {
        match self {
            AppError::UnknownCorpus(_) | AppError::Core(Error::UnknownImage(_)) => 404,
            AppError::DuplicateCorpus(_) => 409,
            AppError::Usage(_) | AppError::BadQuery(_) | AppError::Config(_) => 400,
            AppError::Core(e) => match e {
                Error::InvalidParameter(_)
                | Error::BadTemplate(_)
                | Error::BadGrid(_)
                | Error::BadBBox(_)
                | Error::BadInterval(_)
                | Error::InsufficientClasses(_)
                | Error::BadLogitScale(_) => 400,
                Error::DegenerateScores(_)
                | Error::EmptyRegion
                | Error::EmptyCorpus
                | Error::ZeroVector
                | Error::DimMismatch { .. } => 422,
                Error::Backend(_) | Error::Client(_) => 502,
                _ => 500,
            },
            AppError::Io { .. } | AppError::Internal(_) => 500,
        }
    }

    /// `{"error": name, "message": text}`: the body of HTTP error responses
    /// and the line the CLI prints on failure.
    pub fn to_json(&self) -> serde_json::Value {
        json!({ "error": self.name(), "message": self.to_string() })
    }
}

pub(crate) fn io_error(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> AppError {
    let path = path.into();
    move |source| AppError::Io { path, source }
}
