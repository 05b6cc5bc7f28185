use thiserror::Error;

use crate::types::Direction;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("program level {0} is outside 0..=7")]
    LevelOutOfRange(u32),
    #[error("voltage bin {0} is outside 0..=1023")]
    VoltageOutOfRange(u32),
    #[error("unknown bit string {0:?}")]
    UnknownBits(String),
    #[error("invalid level/bit mapping: {0}")]
    InvalidMapping(String),
    #[error("cell ({row}, {col}) lacks a {direction} neighbor on both sides")]
    Boundary {
        row: usize,
        col: usize,
        direction: Direction,
    },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("bad magic: not a {0} stream")]
    BadMagic(&'static str),
    #[error("unsupported {format} version {version}")]
    UnsupportedVersion { format: &'static str, version: u16 },
    #[error("truncated stream while reading {0}")]
    Truncated(&'static str),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("objective is not finite at {0:?}")]
    NonFiniteObjective(Vec<f64>),
    #[error("histogram is degenerate (single occupied bin)")]
    DegenerateHistogram,
    #[error("histogram is empty")]
    EmptyHistogram,
    #[error("P/E stamp mismatch: {0}")]
    StampMismatch(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<toml::ser::Error> for Error {
    fn from(e: toml::ser::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
