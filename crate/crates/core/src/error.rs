use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's documented precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// A NaN or infinity appeared where finite values are required.
    #[error("numeric failure at {site}: {detail}")]
    Numeric { site: String, detail: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Load(#[from] crate::data::LoadError),

    #[error(transparent)]
    Checkpoint(#[from] crate::train::CheckpointError),

    /// Data that parsed correctly but cannot be used (empty sets, class count disagreement).
    #[error("data error: {0}")]
    Data(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn numeric(site: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Numeric { site: site.into(), detail: detail.into() }
    }
}
