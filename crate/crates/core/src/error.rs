use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit status: 2 for bad configuration, 3 for numerical
    /// failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::InvalidInput(_) | Error::InvalidGroup(_) | Error::UnsupportedFigure(_) => 2,
            Error::Singular { .. }
            | Error::NoInvertiblePerturbation { .. }
            | Error::InsufficientHits { .. }
            | Error::Diverged { .. }
            | Error::SelfIntersecting
            | Error::DimensionMismatch { .. } => 3,
            Error::Io(_) | Error::Csv(_) | Error::Format(_) => 1,
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is singular (|det| = {det:e})")]
    Singular { det: f64 },

    #[error("no invertible perturbation with |t| <= {delta:e} clears the singularity threshold")]
    NoInvertiblePerturbation { delta: f64 },

    #[error("invalid group: {0}")]
    InvalidGroup(String),

    #[error("unsupported figure: {0}")]
    UnsupportedFigure(String),

    #[error("fewer than 2 usable eps grid points (hits per eps: {hits:?})")]
    InsufficientHits { hits: Vec<u64> },

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("self-intersecting polygon")]
    SelfIntersecting,

    #[error("{0}")]
    Usage(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
