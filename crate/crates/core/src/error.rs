use std::io;

use thiserror::Error;

use crate::engine::EngineError;
use crate::schema::SchemaError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("invalid field location `{0}`")]
    InvalidLocation(String),
    /// The location parsed but its bytes are gone or short.
    #[error("dangling field location {location}: {reason}")]
    DanglingLocation { location: String, reason: String },
    #[error("corrupt {what}: {reason}")]
    Corrupt { what: String, reason: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("storage was created with schema {stored}, session uses {session}")]
    SchemaMismatch { stored: String, session: String },
    #[error("empty payload cannot be archived")]
    EmptyPayload,
}

impl Error {
    pub(crate) fn corrupt(what: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Corrupt {
            what: what.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
