use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by network construction, configuration and export.
#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("failed to read config {path}: {source}")]
    ConfigRead {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to parse config: {0}")]
    ConfigParse(#[from] toml::de::Error),

    #[error("object of size {size} cannot fit in storage of capacity {capacity}")]
    Oversized { size: u32, capacity: u32 },

    #[error("export to {path} failed: {source}")]
    Export {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization failed: {0}")]
    Serialize(#[from] serde_json::Error),
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;

pub(crate) fn config_err(msg: impl Into<String>) -> SimError {
    SimError::Config(msg.into())
}
