//! One error type for the whole crate.
//!
//! Variants are grouped by what went wrong rather than by module: shape
//! mismatches and contract violations come from the numeric core, config
//! and parse errors from user-facing surfaces, and `Io` wraps the
//! filesystem. The CLI maps `Config`/`Parse`/`Data` to exit code 1 and
//! everything else to exit code 2.

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Operand shapes do not fit the requested operation.
    #[error("shape mismatch in {op}: {details}")]
    Shape { op: &'static str, details: String },

    /// A numeric argument is outside its documented domain.
    #[error("invalid parameter for {op}: {details}")]
    Parameter { op: &'static str, details: String },

    /// A caller broke an API contract (wrong call order, wrong variant, ...).
    #[error("contract violation in {op}: {details}")]
    Contract { op: &'static str, details: String },

    /// A run configuration failed validation; all problems are listed.
    #[error("invalid configuration:\n{}", problems.join("\n"))]
    Config { problems: Vec<String> },

    /// A text file (manifest, config, vocabulary, ...) failed to parse.
    #[error("parse error in {path}: {details}")]
    Parse { path: String, details: String },

    /// A dataset-level problem: duplicate ids, missing images, bad labels.
    #[error("dataset error: {details}")]
    Data { details: String },

    /// A checkpoint is malformed or disagrees with the requested model.
    #[error("checkpoint error: {details}")]
    Checkpoint { details: String },

    /// Training aborted (non-finite loss or gradient), naming the culprit.
    #[error("training diverged: {details}")]
    Diverged { details: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn shape(op: &'static str, details: impl Into<String>) -> Self {
        Error::Shape {
            op,
            details: details.into(),
        }
    }

    pub fn parameter(op: &'static str, details: impl Into<String>) -> Self {
        Error::Parameter {
            op,
            details: details.into(),
        }
    }

    pub fn contract(op: &'static str, details: impl Into<String>) -> Self {
        Error::Contract {
            op,
            details: details.into(),
        }
    }

    pub fn data(details: impl Into<String>) -> Self {
        Error::Data {
            details: details.into(),
        }
    }

    pub fn checkpoint(details: impl Into<String>) -> Self {
        Error::Checkpoint {
            details: details.into(),
        }
    }

    pub fn parse(path: impl Into<String>, details: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            details: details.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Exit code the CLI should use for this error: 1 for validation
    /// problems the user can fix in their inputs, 2 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Parse { .. } | Error::Data { .. } => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
