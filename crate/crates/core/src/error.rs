// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::PathBuf;

/// Errors surfaced by every fallible operation in this crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid signal: {0}")]
    InvalidSignal(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A hypothesis of a bound or detector does not hold for the supplied values.
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("hausdorff distance is undefined for an empty set")]
    EmptySet,

    #[error("solver did not converge after {iterations} sweeps (duality gap {gap:e})")]
    NotConverged { iterations: usize, gap: f64 },

    #[error("trial {trial}: {source}")]
    Trial {
        trial: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

impl Error {
    /// True when the error stems from the solver rather than from bad input.
    pub fn is_solver_failure(&self) -> bool {
        match self {
            Error::NotConverged { .. } => true,
            Error::Trial { source, .. } => source.is_solver_failure(),
            _ => false,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
