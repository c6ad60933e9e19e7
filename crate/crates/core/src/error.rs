use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("device {device} has no UAV within coverage radius {radius} m")]
    EmptyCandidateSet { device: usize, radius: f64 },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error(
        "no visible satellite with at least {needed:.3} s of service remaining at round {round}"
    )]
    CoverageGap { round: usize, needed: f64 },

    #[error(
        "instance too large for exhaustive search: {combinations} combinations exceed {limit}"
    )]
    InstanceTooLarge { combinations: f64, limit: f64 },

    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("manifest incompatible: {0}")]
    Incompatible(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serialize(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line front end: 2 for configuration
    /// problems, 3 for infeasible instances, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parameter(_)
            | Error::Parse { .. }
            | Error::Config(_)
            | Error::Incompatible(_) => 2,
            Error::EmptyCandidateSet { .. }
            | Error::Infeasible(_)
            | Error::CoverageGap { .. }
            | Error::InstanceTooLarge { .. } => 3,
            Error::Io { .. } | Error::Serialize(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
