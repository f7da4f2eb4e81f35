use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the sampling pipeline.
#[derive(Debug, Error)]
pub enum PrismError {
    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("spectrum is not Hermitian: imaginary residue {residue:e} exceeds tolerance")]
    SymmetryViolation { residue: f64 },

    #[error("degenerate scale parameter {name} = {value}")]
    DegenerateScale { name: &'static str, value: f64 },

    #[error("dense oracle limited to 144 unknowns, got {0}")]
    TooLarge(usize),

    #[error("grid {height}x{width} is smaller than the {min}x{min} window")]
    TooSmall {
        height: usize,
        width: usize,
        min: usize,
    },

    #[error("cannot estimate from an empty sample set")]
    EmptySampleSet,

    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("bad kernel support {support} for a {height}x{width} grid")]
    BadSupport {
        support: usize,
        height: usize,
        width: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("bridge at {dir} timed out after {seconds:.3}s waiting for {file}")]
    BridgeTimeout {
        dir: PathBuf,
        file: String,
        seconds: f64,
    },

    #[error("malformed bridge response {path}: {reason}")]
    MalformedResponse { path: PathBuf, reason: String },

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("run interrupted on request")]
    Interrupted,

    #[error("chain halted at iteration {k}; resume from {checkpoint}: {source}")]
    ChainHalted {
        k: usize,
        checkpoint: PathBuf,
        #[source]
        source: Box<PrismError>,
    },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, PrismError>;

impl PrismError {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        PrismError::Io {
            context: context.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        PrismError::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

/// Rejects non-positive or non-finite scale parameters.
pub(crate) fn check_scale(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(PrismError::DegenerateScale { name, value })
    }
}
