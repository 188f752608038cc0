use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the estimation, selection and persistence routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum GlomeError {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("{0} is not positive definite above the eigenvalue floor")]
    NotPositiveDefinite(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("component {k} has no responsibility mass")]
    EmptyComponent { k: usize },
    #[error("weighted design of component {k} is singular")]
    SingularDesign { k: usize },
    #[error("too few samples: n = {n}, at least {required} required")]
    TooFewSamples { n: usize, required: usize },
    #[error("all EM restarts failed: {0}")]
    AllRestartsFailed(String),
    #[error("criterion table is empty")]
    EmptyTable,
    #[error("criterion table is invalid: {0}")]
    InvalidTable(String),
    #[error("dimension path is degenerate (a single model dimension)")]
    DegeneratePath,
    #[error("slope window holds {size} models, at least 3 are needed")]
    WindowTooSmall { size: usize },
    #[error("reference density has no sampler")]
    SamplerMissing,
    #[error("argument out of range: {0}")]
    OutOfRange(String),
    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("parse error at row {row}, column `{column}`: {message}")]
    ParseError {
        row: usize,
        column: String,
        message: String,
    },
    #[error("unsupported schema version {found:?} (expected {expected})")]
    SchemaVersionMismatch { found: Option<u64>, expected: u64 },
    #[error("I/O error: {0}")]
    Io(String),
    #[error("serialization error: {0}")]
    Serde(String),
}

pub type Result<T, E = GlomeError> = std::result::Result<T, E>;

impl From<std::io::Error> for GlomeError {
    fn from(e: std::io::Error) -> Self {
        GlomeError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for GlomeError {
    fn from(e: serde_json::Error) -> Self {
        GlomeError::Serde(e.to_string())
    }
}

impl From<csv::Error> for GlomeError {
    fn from(e: csv::Error) -> Self {
        GlomeError::Serde(e.to_string())
    }
}
