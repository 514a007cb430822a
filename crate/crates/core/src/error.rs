use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("invalid ballot: {0}")]
    InvalidBallot(String),

    #[error("candidate {candidate} out of range for {num_candidates} candidates")]
    InvalidCandidate {
        candidate: usize,
        num_candidates: usize,
    },

    #[error("voter {voter} out of range for {num_voters} voters")]
    InvalidVoter { voter: usize, num_voters: usize },

    #[error("cannot remove the only voter of a profile")]
    CannotEmptyProfile,

    #[error("embedding is already normalized")]
    AlreadyNormalized,

    #[error("embedding must be normalized before flattening")]
    NotNormalized,

    #[error("internal logic error: {0}")]
    Internal(String),

    #[error("invalid profile pair: {0}")]
    InvalidPair(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("participation is undefined for a single-voter profile")]
    UndefinedParticipation,

    #[error("backward pass requires a forward cache")]
    MissingCache,

    #[error("format error: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable category, used by the CLI error line.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidDimension(_)
            | Error::InvalidBallot(_)
            | Error::InvalidCandidate { .. }
            | Error::InvalidVoter { .. }
            | Error::CannotEmptyProfile
            | Error::InvalidPair(_)
            | Error::DimensionMismatch { .. }
            | Error::UndefinedParticipation => "invalid-input",
            Error::AlreadyNormalized | Error::NotNormalized | Error::MissingCache => "state",
            Error::Internal(_) => "internal",
            Error::Format(_) | Error::Json(_) => "format",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
        }
    }
}
