use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid: {0}")]
    Invalid(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] benet_core::Error),

    #[error(transparent)]
    Data(#[from] benet_data::DataError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("{path}: {source}")]
    File {
        path: std::path::PathBuf,
        source: Box<HarnessError>,
    },
}

impl HarnessError {
    pub fn at(path: impl Into<std::path::PathBuf>) -> impl FnOnce(HarnessError) -> HarnessError {
        let path = path.into();
        move |e| HarnessError::File {
            path,
            source: Box::new(e),
        }
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
