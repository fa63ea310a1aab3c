use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller supplied an invalid argument or violated a precondition.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// Input data does not follow the expected on-disk format.
    #[error("format error: {0}")]
    Format(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("no tokens found in any extracted triple; the text graph would be empty")]
    EmptyGraph,

    #[error("internal consistency error: {0}")]
    Consistency(String),

    #[error("model/pooling vocabulary mismatch: model vocab digest {model}, pooling vocab digest {pooling}")]
    Compatibility { model: String, pooling: String },

    #[error("credential error: {0}")]
    Credential(String),

    #[error("transport error: {0}")]
    Transport(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    /// Non-finite parameters were handed to a numerical routine.
    #[error("numerical state error: {0}")]
    State(String),

    #[error("training diverged: {0}")]
    Training(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 2 usage, 3 data/format, 4 provider/transport,
    /// 5 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Argument(_) => 2,
            Error::Format(_)
            | Error::Io { .. }
            | Error::EmptyGraph
            | Error::Consistency(_)
            | Error::Compatibility { .. } => 3,
            Error::Credential(_) | Error::Transport(_) | Error::Protocol(_) => 4,
            Error::State(_) | Error::Training(_) => 5,
        }
    }
}
