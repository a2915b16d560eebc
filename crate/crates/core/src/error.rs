use std::fmt;

/// Crate-wide result alias.
pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Protocol phase in which an abort happened.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Round {
    KeyDistribution,
    SeedAgreement,
    SecureCount,
    IndexAssignment,
    Masking,
    Aggregation,
    Detection,
    Reporting,
}

impl fmt::Display for Round {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Round::KeyDistribution => "key distribution",
            Round::SeedAgreement => "seed agreement",
            Round::SecureCount => "secure total count",
            Round::IndexAssignment => "index assignment",
            Round::Masking => "masking",
            Round::Aggregation => "aggregation",
            Round::Detection => "detection",
            Round::Reporting => "reporting",
        };
        f.write_str(name)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid ciphertext: {0}")]
    InvalidCiphertext(String),

    #[error("protocol aborted during {round}: {reason}")]
    ProtocolAbort { round: Round, reason: String },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("malformed wire data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn abort(round: Round, reason: impl Into<String>) -> Self {
        Error::ProtocolAbort {
            round,
            reason: reason.into(),
        }
    }
}
