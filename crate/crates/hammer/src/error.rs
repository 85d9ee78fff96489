use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum HammerError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Fdb(#[from] fdb_core::Error),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad record in {path}: {reason}")]
    BadRecord { path: PathBuf, reason: String },
    #[error("no records to aggregate")]
    NoRecords,
    #[error("nothing to report")]
    EmptyReport,
    #[error("{failed} of {total} workers failed in phase {phase}: {first}")]
    WorkerFailed {
        phase: String,
        failed: usize,
        total: usize,
        first: String,
    },
}

impl HammerError {
    pub(crate) fn io(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> Self {
        let context = context.into();
        move |source| HammerError::Io { context, source }
    }
}

pub type Result<T, E = HammerError> = std::result::Result<T, E>;
