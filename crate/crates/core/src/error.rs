use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed JSON. `offset` is the byte offset into the file.
    #[error("parse error in {path} at byte {offset} (line {line}, column {column}): {message}")]
    Parse {
        path: PathBuf,
        offset: usize,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("schema error in {path}: {message} (field `{field}`)")]
    Schema {
        path: PathBuf,
        field: String,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("song {0} is not in the model vocabulary")]
    OutOfVocabulary(u32),

    #[error("cannot recommend {k} songs: only {available} candidates remain after excluding the seed")]
    KTooLarge { k: usize, available: usize },

    #[error("training diverged at epoch {epoch}, step {step}: loss = {loss}")]
    Divergence { epoch: usize, step: usize, loss: f64 },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("{0}")]
    Undefined(String),

    #[error("missing run artifacts: {}", .0.join(", "))]
    MissingArtifacts(Vec<String>),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
