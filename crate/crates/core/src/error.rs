//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Matrix/catalog dimensions do not agree.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// An index points outside the referenced collection.
    #[error("index out of range: {0}")]
    Index(String),

    /// Invalid configuration or usage.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A value lies outside its permitted range.
    #[error("value out of range: {0}")]
    Range(String),

    /// Input is degenerate (zero norm, non-finite values).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// A fit needs both label classes present.
    #[error("insufficient classes: {0}")]
    InsufficientClasses(String),

    /// A fit needs more samples than were given.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// An iterative solver did not converge.
    #[error("no convergence after {iterations} iterations: {message}")]
    Convergence { iterations: usize, message: String },

    /// A score matrix has the wrong kind for this operation.
    #[error("wrong score kind: {0}")]
    Kind(String),

    /// A calibrator flagged as decreasing reached fusion.
    #[error("flagged calibrator: {0}")]
    FlaggedCalibrator(String),

    /// Retrieval against an empty database.
    #[error("database is empty")]
    EmptyDatabase,

    /// The expensive-scorer callback failed on a pair.
    #[error("scorer failed on pair ({query}, {database}): {message}")]
    Scorer {
        query: usize,
        database: usize,
        message: String,
    },

    /// A sampling constraint cannot be satisfied.
    #[error("constraint unsatisfiable: {0}")]
    Constraint(String),

    /// A data file references an id missing from its catalog.
    #[error("unknown item at line {line}: {item}")]
    UnknownItem { line: usize, item: String },

    /// A file does not match its declared format.
    #[error("bad file format ({what}): {message}")]
    Format { what: &'static str, message: String },

    /// Underlying I/O failure.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Stable process exit code: 1 usage/config, 2 data/format, 3 numeric/convergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Convergence { .. } => 3,
            _ => 2,
        }
    }

    /// Prefix the message with the pipeline stage that raised the error.
    pub fn with_stage(self, stage: &str) -> Error {
        let tag = |m: String| format!("[{stage}] {m}");
        match self {
            Error::Shape(m) => Error::Shape(tag(m)),
            Error::Index(m) => Error::Index(tag(m)),
            Error::Config(m) => Error::Config(tag(m)),
            Error::Range(m) => Error::Range(tag(m)),
            Error::DegenerateInput(m) => Error::DegenerateInput(tag(m)),
            Error::InsufficientClasses(m) => Error::InsufficientClasses(tag(m)),
            Error::InsufficientData(m) => Error::InsufficientData(tag(m)),
            Error::Convergence { iterations, message } => Error::Convergence {
                iterations,
                message: tag(message),
            },
            Error::Kind(m) => Error::Kind(tag(m)),
            Error::FlaggedCalibrator(m) => Error::FlaggedCalibrator(tag(m)),
            Error::Constraint(m) => Error::Constraint(tag(m)),
            other => other,
        }
    }
}
