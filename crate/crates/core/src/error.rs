use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
///
/// The variants are grouped by how a batch operator should react: fix the
/// invocation ([`Error::Parameter`], [`Error::Config`]), fix the input data
/// ([`Error::Geometry`], [`Error::EmptySurface`], [`Error::Data`],
/// [`Error::Io`]) or revisit the fitting setup ([`Error::Fit`]).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("iso-surface is empty: no sign crossing at iso = {iso}")]
    EmptySurface { iso: f64 },

    #[error("data error: {0}")]
    Data(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub(crate) fn fit(msg: impl Into<String>) -> Self {
        Error::Fit(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status for the command-line tool.
    ///
    /// 1 = usage, 2 = data, 3 = numeric/fit.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parameter(_) | Error::Config(_) => 1,
            Error::Geometry(_) | Error::EmptySurface { .. } | Error::Data(_) | Error::Io { .. } => 2,
            Error::Fit(_) => 3,
        }
    }
}
