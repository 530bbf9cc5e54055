use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("singular matrix: rank {rank} < {dim}")]
    SingularMatrix { rank: usize, dim: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("file {file} has {actual} symbols, expected {expected}")]
    LengthMismatch {
        file: usize,
        expected: usize,
        actual: usize,
    },

    #[error("phase {phase}: channel-use count is not integral for granularity {granularity}")]
    Granularity { phase: usize, granularity: String },

    #[error("subpacketization too large to simulate: {0}")]
    TooLarge(String),

    #[error("degenerate channel at use {t} (phase {phase}, user {user})")]
    DegenerateChannel { t: usize, phase: usize, user: usize },

    #[error(
        "transmitter read CSI of use {requested} before it was fed back (visible up to {visible})"
    )]
    Causality { requested: usize, visible: usize },

    #[error("missing observation: {0}")]
    MissingObservation(String),

    #[error("gap certificate violated at K={k}, Gamma={gamma}: ratio {ratio}")]
    CertificateViolation {
        k: usize,
        gamma: usize,
        ratio: String,
    },

    #[error("check failed: {0}")]
    CheckFailed(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
