use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("subsystem label `{0}` appears more than once")]
    LabelCollision(String),

    #[error("unknown subsystem label `{0}`")]
    UnknownLabel(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("operator is not Hermitian (deviation {0:.3e})")]
    NotHermitian(f64),

    #[error("partial trace over every subsystem; use the full trace instead")]
    ScalarResult,

    #[error("cut does not bipartition the labels: {0}")]
    InvalidCut(String),

    #[error("target not entangled (Schmidt angle {0:.3e})")]
    NotEntangled(f64),

    #[error("input ensemble is not tomographically complete (Gram rank {rank}, need 4)")]
    IncompleteEnsemble { rank: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("outcome index {index} out of range ({len} elements)")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("POVM elements do not sum to the identity (deviation {0:.3e})")]
    IncompletePovm(f64),

    #[error("non-finite score at restart {restart}, iteration {iteration}; trajectory: {dump}")]
    NonFiniteScore {
        restart: usize,
        iteration: usize,
        dump: String,
    },

    #[error("parameter on the boundary where c diverges: {0}")]
    Boundary(String),

    #[error("serialization: {0}")]
    Serde(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}
