use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Query text does not follow the grammar. `pos` is a byte offset.
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },

    /// Query uses a construct the engine deliberately does not evaluate.
    #[error("unsupported feature: {0}")]
    Unsupported(String),

    #[error("invalid pattern: {0}")]
    InvalidPattern(String),

    #[error("malformed event `{id}`: missing attribute `{attr}`")]
    MissingAttribute { id: String, attr: String },

    #[error("unbound pattern parameter `{0}`")]
    UnboundParam(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{}:{line}: {msg}", path.display())]
    EventFile {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("event type `{0}` is not part of the pattern")]
    UnknownEventType(String),

    /// The brute-force oracle refuses inputs that would blow up combinatorially.
    #[error("oracle input too large: {0}")]
    TooLarge(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
