use std::path::PathBuf;

use curve_moments::{CompletionError, MomentError};
use curve_moments::reduction::ReductionError;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("malformed JSON in {path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("invalid curve descriptor {0:?}: expected \"y=x^k\", \"y*x^l=1\" or a coefficient list")]
    Curve(String),
    #[error("{0}")]
    Measure(String),
    #[error(transparent)]
    Moment(#[from] MomentError),
    #[error(transparent)]
    Reduction(#[from] ReductionError),
    #[error(transparent)]
    Completion(#[from] CompletionError),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Read { .. } | CliError::Write { .. } => "io",
            CliError::Json { .. } => "json",
            CliError::Curve(_) => "curve",
            CliError::Measure(_) => "measure",
            CliError::Moment(MomentError::InvalidTolerance(_)) => "tolerance",
            CliError::Moment(_) => "problem",
            CliError::Reduction(_) => "reduction",
            CliError::Completion(_) => "solver",
        }
    }

    /// The object printed on failure.
    pub fn to_object(&self) -> ErrorObject {
        ErrorObject { error: ErrorBody { kind: self.kind(), message: self.to_string() } }
    }
}

#[derive(Debug, Serialize)]
pub struct ErrorObject {
    error: ErrorBody,
}

#[derive(Debug, Serialize)]
struct ErrorBody {
    kind: &'static str,
    message: String,
}
