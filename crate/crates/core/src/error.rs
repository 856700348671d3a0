use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid pixel index {index} (array has {count} pixels)")]
    InvalidPixel { index: usize, count: usize },

    #[error("{0}")]
    Domain(String),

    #[error("bias {bias_ua} uA exceeds switching current {i_switch_ua} uA: detector latched in the normal state")]
    Latched { bias_ua: f64, i_switch_ua: f64 },

    #[error("invalid scenario at `{path}`: {message}")]
    Scenario { path: String, message: String },

    #[error("input not sorted at position {index}")]
    Unsorted { index: usize },

    #[error("tag rate exceeds {max_tags} tags per window at t = {window_ps} ps")]
    RateExceeded { window_ps: f64, max_tags: u64 },

    #[error("tag file format error: {0}")]
    Format(String),

    #[error("truncated tag file at byte offset {offset}")]
    Truncated { offset: u64 },

    #[error("missing recordings for pixels {0:?}")]
    MissingRecordings(Vec<usize>),

    #[error("insufficient counts on channel {channel}: {found} < required minimum {required}")]
    InsufficientCounts { channel: u16, found: u64, required: u64 },

    #[error("3-dB point not bracketed by the data")]
    NotBracketed,

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
