use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A file could not be decoded. `context` names the first offending
    /// record when one can be identified.
    #[error("format error in {context}: {message}")]
    Format { context: String, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("MIDI error at byte {offset}: {message}")]
    Midi { offset: usize, message: String },

    #[error("review stage ordering violated: {0}")]
    StageOrder(String),

    #[error("pose track does not cover frame {frame} (track has {available} frames)")]
    Coverage { frame: u32, available: usize },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("window of {got} onset groups exceeds the context window of {max}")]
    WindowOverflow { got: usize, max: usize },

    #[error("non-finite loss at epoch {epoch}, batch {batch}: {loss}")]
    NonFiniteLoss { epoch: usize, batch: usize, loss: f64 },

    #[error("count mismatch: expected {expected} {what}, got {got}")]
    CountMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
