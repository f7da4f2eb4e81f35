use std::path::PathBuf;

use prism_core::PrismError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid input: {0}")]
    Input(String),

    #[error(transparent)]
    Core(#[from] PrismError),

    #[error("image {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            context: context.into(),
            source,
        }
    }

    /// 2 for bad input (arguments, configuration, malformed files), 1 for
    /// failures while running.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Core(e) => core_exit_code(e),
            CliError::Image { .. } => 2,
            CliError::Io { .. } => 1,
        }
    }
}

fn core_exit_code(e: &PrismError) -> u8 {
    match e {
        PrismError::ShapeMismatch { .. }
        | PrismError::InvalidGrid(_)
        | PrismError::DegenerateScale { .. }
        | PrismError::TooSmall { .. }
        | PrismError::BadSupport { .. }
        | PrismError::InvalidConfig(_)
        | PrismError::Format { .. } => 2,
        PrismError::ChainHalted { .. }
        | PrismError::Interrupted
        | PrismError::BridgeTimeout { .. }
        | PrismError::MalformedResponse { .. }
        | PrismError::SymmetryViolation { .. }
        | PrismError::TooLarge(_)
        | PrismError::EmptySampleSet
        | PrismError::InsufficientSamples { .. }
        | PrismError::Io { .. } => 1,
    }
}
