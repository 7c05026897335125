use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("histogram binning mismatch: {0}")]
    BinningMismatch(String),

    #[error("input stream `{0}` is not sorted by timestamp")]
    Unsorted(&'static str),

    #[error("event at {timestamp_ps} ps lies outside the run [0, {duration_ps}) ps")]
    OutOfRun { timestamp_ps: u64, duration_ps: u64 },

    /// A statistic cannot be formed, e.g. no valid APD counts.
    #[error("statistics failure: {0}")]
    Statistics(String),

    #[error("malformed time-tag file: {0}")]
    Format(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }
}
