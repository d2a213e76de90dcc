use thiserror::Error;

use crate::frontend::ParseError;

/// Errors surfaced by the toolchain, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("analysis error: {0}")]
    Analysis(String),
    #[error("stale report: {0}")]
    Stale(String),
    #[error("replay divergence: thread {thread} at {site} (icount {icount}): {detail}")]
    Divergence {
        thread: usize,
        site: String,
        icount: u64,
        detail: String,
    },
    #[error("resource cap exceeded: {0}")]
    ResourceCap(String),
    #[error("runtime error: {0}")]
    Runtime(String),
    #[error("malformed log: {0}")]
    Log(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse(_) | Error::Analysis(_) | Error::Stale(_) => 2,
            Error::Divergence { .. } | Error::Log(_) => 3,
            Error::ResourceCap(_) => 4,
            Error::Runtime(_) | Error::Io(_) | Error::Json(_) => 1,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
