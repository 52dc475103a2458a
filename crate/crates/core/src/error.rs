use thiserror::Error;

/// Errors raised by the numerical kernels and the inequality engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unknown layout name `{0}`")]
    UnknownLayout(String),

    #[error("layout parameter phi = {0} outside [-pi, pi]")]
    PhiOutOfRange(f64),

    #[error("truncation at dim {dim} leaves tail mass {tail:e} (limit 1e-8)")]
    Truncation { dim: usize, tail: f64 },

    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("state norm {0:e} is too small to normalize")]
    ZeroNorm(f64),

    #[error("alpha = {0} is below the coefficient-algebra floor 0.05")]
    AlphaTooSmall(f64),

    #[error("{what}: closed form and Fock oracle differ by {diff:e}")]
    Certification { what: String, diff: f64 },

    #[error("model `{0}` is not defined for this state/measurement pairing")]
    UnsupportedModel(String),

    #[error("layout `{0}` has no Leggett bound in this mode")]
    NoBound(String),

    #[error("optimizer did not reproduce its best value: spread {spread:e} after {starts} starts")]
    NotConverged { spread: f64, starts: usize },

    #[error("invalid search configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
