use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("spectral state is not Hermitian (deviation {deviation:.3e})")]
    SymmetryViolation { deviation: f64 },

    #[error("multiplier symbol is not finite at xi = {xi}")]
    NonFiniteSymbol { xi: f64 },

    #[error("field is not mean-zero (zero-mode magnitude {mean:.3e})")]
    NotMeanZero { mean: f64 },

    #[error("region mask selects no grid points")]
    EmptyRegion,

    #[error("x = {x} is outside the kernel range |x| <= {x_max}")]
    KernelRange { x: f64, x_max: f64 },

    #[error("quadrature at x = {x} missed its target, achieved error {achieved:.3e}")]
    Quadrature { x: f64, achieved: f64 },

    #[error("non-finite state after t = {last_time}")]
    BlowUp { last_time: f64 },

    #[error("tail mass {tail:.3e} exceeds threshold {threshold:.1e} at t = {time}")]
    TailOverflow { time: f64, tail: f64, threshold: f64 },

    #[error("time {time} is outside the background range [{start}, {end}]")]
    OutsideBackground { time: f64, start: f64, end: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{origin}: line {line}: {message}")]
    Parse {
        origin: String,
        line: usize,
        message: String,
    },

    #[error("malformed file {path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::BlowUp { .. } | Error::TailOverflow { .. } => 3,
            Error::Io { .. } | Error::Format { .. } => 4,
            _ => 2,
        }
    }
}
