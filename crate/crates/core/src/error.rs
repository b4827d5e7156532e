use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: unsupported wav header field `{field}`: {detail}")]
    WavHeader {
        path: PathBuf,
        field: &'static str,
        detail: String,
    },

    #[error("{path}: malformed wav: {detail}")]
    WavFormat { path: PathBuf, detail: String },

    #[error("unsupported resampling ratio {from} Hz -> {to} Hz")]
    UnsupportedRatio { from: u32, to: u32 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("latency budget exceeded: window of {window_len} samples at {rate} Hz is {latency_ms:.4} ms (limit 20 ms)")]
    Latency {
        window_len: usize,
        rate: u32,
        latency_ms: f64,
    },

    #[error("unknown asset `{0}`")]
    UnknownAsset(String),

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("check failed: {0}")]
    Check(String),

    #[error("config: {0}")]
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
