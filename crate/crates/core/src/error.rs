use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse classification used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad input: out-of-range values, malformed files, bad configuration.
    Validation,
    /// Inputs are well formed but the requested analysis cannot be carried out.
    Infeasible,
    /// Filesystem failure.
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("singular least-squares design (rank {rank} of {expected})")]
    SingularFit { rank: usize, expected: usize },

    #[error("infeasible split: {0}")]
    InfeasibleSplit(String),

    #[error("undefined statistic: {0}")]
    Undefined(String),

    #[error("singularity: {0}")]
    Singularity(String),

    #[error("{file}: row {row}, column {column}: {message}")]
    Csv {
        file: String,
        row: usize,
        column: String,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("reference device `{0}` not present in input")]
    MissingReference(String),

    #[error("pairing produced zero pairs: {0}")]
    NoPairs(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Domain(_) | Error::Csv { .. } | Error::Config(_) => ErrorClass::Validation,
            Error::InsufficientData(_)
            | Error::SingularFit { .. }
            | Error::InfeasibleSplit(_)
            | Error::Undefined(_)
            | Error::Singularity(_)
            | Error::MissingReference(_)
            | Error::NoPairs(_) => ErrorClass::Infeasible,
            Error::Stage { source, .. } => source.class(),
            Error::Io { .. } => ErrorClass::Io,
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Error {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
