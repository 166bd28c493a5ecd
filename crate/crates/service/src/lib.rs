//! Corpus service: edit serialization, review status, pipeline jobs and the
//! REST interface used by the review UI.

pub mod api;
pub mod edits;
pub mod error;
pub mod jobs;
pub mod store;

pub use api::{corpus_dir, router, serve, AppState, CORPUS_ENV};
pub use error::{Result, ServiceError};
pub use jobs::{JobKind, JobRecord, JobRegistry, JobState};
pub use store::CorpusStore;
