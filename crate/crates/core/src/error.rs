use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("event {index} at ({x}, {y}) lies outside the {width}x{height} sensor")]
    OutOfBoundsEvent {
        index: usize,
        x: u32,
        y: u32,
        width: u16,
        height: u16,
    },

    #[error("event {index}: timestamp {t} precedes previous timestamp {prev}")]
    NonMonotoneTimestamp { index: usize, prev: u64, t: u64 },

    #[error("truncated record: expected {expected} bytes, found {found}")]
    TruncatedRecord { expected: usize, found: usize },

    #[error("malformed record {index}: {reason}")]
    MalformedRecord { index: usize, reason: String },

    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },

    #[error("non-positive time step: t={t} is not after t_last={t_last}")]
    NonPositiveDt { t: u64, t_last: u64 },

    #[error("track {0} has no pre-occlusion size")]
    MissingPreOcclusionSize(u64),

    #[error("time {t} is outside the history span [{start}, {end}]")]
    OutOfRange { t: u64, start: u64, end: u64 },

    #[error("ground truth is empty")]
    EmptyGroundTruth,

    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// True when the error comes from malformed or inconsistent input data
    /// rather than a broken internal invariant.
    pub fn is_input_error(&self) -> bool {
        !matches!(
            self,
            Error::NonPositiveDt { .. } | Error::MissingPreOcclusionSize(_)
        )
    }
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        let line = err.position().map(|p| p.line()).unwrap_or(0);
        match err.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            kind => Error::MalformedRow {
                line,
                reason: format!("{kind:?}"),
            },
        }
    }
}
