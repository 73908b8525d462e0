use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: u64, msg: String },

    #[error("unknown {what} '{value}'")]
    Unknown { what: &'static str, value: String },

    #[error("invalid: {0}")]
    Invalid(String),

    #[error("image {path}: {msg}")]
    Image { path: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Core(#[from] benet_core::Error),
}

pub type Result<T, E = DataError> = std::result::Result<T, E>;
