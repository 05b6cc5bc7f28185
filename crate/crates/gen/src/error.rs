use thiserror::Error;

pub type Result<T, E = GenError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum GenError {
    #[error("P/E count {pe} exceeds the embedding maximum {pe_max}")]
    PeOutOfRange { pe: u32, pe_max: u32 },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite {what} at step {step}")]
    NonFiniteLoss { what: &'static str, step: u64 },
    #[error("non-finite gradient in {name} at step {step}")]
    NonFiniteGradient { name: String, step: u64 },
    #[error("training dataset is empty")]
    EmptyDataset,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("not a checkpoint stream (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u16),
    #[error("truncated checkpoint while reading {0}")]
    Truncated(&'static str),
    #[error("checkpoint does not match the model: {0}")]
    CheckpointMismatch(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Channel(#[from] flashchan::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<toml::de::Error> for GenError {
    fn from(e: toml::de::Error) -> Self {
        GenError::Parse(e.to_string())
    }
}

impl From<toml::ser::Error> for GenError {
    fn from(e: toml::ser::Error) -> Self {
        GenError::Parse(e.to_string())
    }
}
