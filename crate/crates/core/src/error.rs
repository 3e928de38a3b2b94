use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("id out of range: {0}")]
    OutOfRange(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    /// A record could not be ingested. `t` is the zero-based row index within the flight.
    #[error("ingestion error in flight `{flight_id}` at t={t}: {reason}")]
    Ingestion {
        flight_id: String,
        t: usize,
        reason: String,
    },

    #[error("malformed input: {0}")]
    Format(String),

    /// Every phase assigned zero likelihood to the observation at step `t`.
    #[error("degenerate evidence at t={t}")]
    DegenerateEvidence { t: usize },

    #[error("rank-deficient least-squares system and no ridge available")]
    RankDeficient,

    #[error("usage error: {0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn ingestion(flight_id: &str, t: usize, reason: impl Into<String>) -> Self {
        Error::Ingestion {
            flight_id: flight_id.to_string(),
            t,
            reason: reason.into(),
        }
    }
}
