use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Core(#[from] fingerlab::Error),

    #[error("{0} not found")]
    NotFound(String),

    #[error("note ({key}, {onset}) already exists as {existing}")]
    Collision { key: u8, onset: u32, existing: String },

    #[error("version conflict: client saw {client}, track is at {current}")]
    VersionConflict { client: u64, current: u64 },

    #[error("invalid request: {0}")]
    BadRequest(String),

    #[error("missing prerequisite: {0}")]
    Prerequisite(String),

    #[error("{path}: {message}")]
    Log { path: PathBuf, message: String },
}

pub type Result<T, E = ServiceError> = std::result::Result<T, E>;
