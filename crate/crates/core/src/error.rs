use thiserror::Error;

/// Errors raised by the core library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mode layout: {0}")]
    InvalidLayout(String),

    #[error("empty sector: {particles} particles in {modes} modes")]
    EmptySector { particles: usize, modes: usize },

    #[error("occupation {0:#b} is not in the sector")]
    NotInSector(u64),

    #[error("sector violation: operator maps {from:#b} to {to:#b}, outside the sector")]
    SectorViolation { from: u64, to: u64 },

    #[error("mode index {index} out of range for {n_modes} modes")]
    ModeOutOfRange { index: usize, n_modes: usize },

    #[error("invalid mixture: {0}")]
    InvalidMixture(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("need at least {needed} particles, got {got}")]
    TooFewParticles { needed: usize, got: usize },

    #[error("operator pool is empty")]
    EmptyPool,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("thermal ensemble: {0}")]
    Thermal(String),

    #[error("non-finite distance encountered")]
    NonFinite,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
