use thiserror::Error;

/// Errors produced by state construction, transforms and witness evaluation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("amplitudes are not normalized: squared norm {norm_sq} (rescale by 1/sqrt({norm_sq}))")]
    NotNormalized { norm_sq: f64 },

    #[error("Fock index {index} is outside the cutoff {cutoff} of mode {mode}")]
    IndexOutOfRange {
        mode: char,
        index: usize,
        cutoff: usize,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("Fock truncation not converged: tail population {tail:.3e} (suggested cutoff {suggested_cutoff})")]
    NotConverged { tail: f64, suggested_cutoff: usize },

    #[error("quadrature failed to converge: {0}")]
    Quadrature(String),

    #[error("grid check failed: {0}")]
    Grid(String),

    #[error("separability bounds are provisional (tail bound {tail_bound:.3e}); increase n_max")]
    ProvisionalBounds { tail_bound: f64 },

    #[error("unphysical covariance matrix: {0}")]
    Unphysical(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
