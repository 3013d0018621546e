//! Error type shared by every module of the toolkit.

use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse class used to choose a process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad arguments, bad configuration, or input that fails a precondition.
    Validation,
    /// Data on disk or in memory that is internally inconsistent.
    Integrity,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("format error: {0}")]
    Format(String),
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("unsupported dtype `{0}` (only f32 is supported)")]
    UnsupportedDtype(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("scope `{0}` requested but the archive has no role prefixes")]
    MissingRoleMap(String),
    #[error("incompatible archives at tensor `{tensor}`: {reason}")]
    IncompatibleArchives { tensor: String, reason: String },
    #[error("mode error: {0}")]
    Mode(String),
    #[error("arity error: {0}")]
    Arity(String),
    #[error("trajectory error: {0}")]
    Trajectory(String),
    #[error("ordering error: {0}")]
    Ordering(String),
    #[error("naming error: {0}")]
    Naming(String),
    #[error("empty content: {0}")]
    EmptyContent(String),
    #[error("transform error: {0}")]
    Transform(String),
    #[error("size error: {0}")]
    Size(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("consistency error: {0}")]
    Consistency(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("packing error: {0}")]
    Packing(String),
    #[error("comparison error: {0}")]
    Comparison(String),
    #[error("join error: {0}")]
    Join(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("image error on {path}: {message}")]
    Image { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Format(_)
            | Error::Integrity(_)
            | Error::UnsupportedDtype(_)
            | Error::IncompatibleArchives { .. }
            | Error::Shape(_)
            | Error::Transform(_)
            | Error::Consistency(_)
            | Error::Join(_)
            | Error::Io { .. }
            | Error::Image { .. } => ErrorClass::Integrity,
            Error::Validation(_)
            | Error::MissingRoleMap(_)
            | Error::Mode(_)
            | Error::Arity(_)
            | Error::Trajectory(_)
            | Error::Ordering(_)
            | Error::Naming(_)
            | Error::EmptyContent(_)
            | Error::Size(_)
            | Error::Parse(_)
            | Error::Packing(_)
            | Error::Comparison(_)
            | Error::Json(_)
            | Error::Csv(_) => ErrorClass::Validation,
        }
    }

    /// Short machine-readable tag for diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Format(_) => "format",
            Error::Integrity(_) => "integrity",
            Error::UnsupportedDtype(_) => "unsupported-dtype",
            Error::Validation(_) => "validation",
            Error::MissingRoleMap(_) => "missing-role-map",
            Error::IncompatibleArchives { .. } => "incompatible-archives",
            Error::Mode(_) => "mode",
            Error::Arity(_) => "arity",
            Error::Trajectory(_) => "trajectory",
            Error::Ordering(_) => "ordering",
            Error::Naming(_) => "naming",
            Error::EmptyContent(_) => "empty-content",
            Error::Transform(_) => "transform",
            Error::Size(_) => "size",
            Error::Shape(_) => "shape",
            Error::Consistency(_) => "consistency",
            Error::Parse(_) => "parse",
            Error::Packing(_) => "packing",
            Error::Comparison(_) => "comparison",
            Error::Join(_) => "join",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
            Error::Image { .. } => "image",
        }
    }
}
