use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid coordinate: lat {lat}, lon {lon}")]
    InvalidCoordinate { lat: f64, lon: f64 },
    #[error("invalid unit vector: norm {norm}")]
    InvalidVector { norm: f64 },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("unsupported ambient dimension {0}; only 3 is supported")]
    UnsupportedDimension(usize),
    #[error("item index {item} out of range for catalog of size {size}")]
    InvalidItem { item: usize, size: usize },
    #[error("state corruption: {0}")]
    StateCorruption(String),
    #[error("merge epoch mismatch: expected {expected}, found {found}")]
    MergeEpoch { expected: u64, found: u64 },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error at line {line}: {message}")]
    Data { line: usize, message: String },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
