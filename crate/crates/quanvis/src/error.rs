//! Error type shared across the library, with the CLI exit-code mapping.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration: bad parameter ranges, malformed config files.
    #[error("configuration error: {0}")]
    Config(String),
    /// Invalid input data: missing directories, out-of-range pixel values.
    #[error("input error: {0}")]
    Input(String),
    /// Contract violation between components: shape or index mismatches.
    #[error("structural error: {0}")]
    Structural(String),
    /// Non-finite values or other numeric failures.
    #[error("numeric error: {0}")]
    Numeric(String),
    /// Malformed serialized artifact: bad magic, version, or truncation.
    #[error("format error: {0}")]
    Format(String),
    /// Cache inconsistency; callers recompute and overwrite.
    #[error("cache error: {0}")]
    Cache(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    /// Process exit code: input/config/structural problems map to 2,
    /// numeric failures to 3.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numeric(_) => 3,
            _ => 2,
        }
    }
}
