//! Error type shared by every module in the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, GsdError>;

#[derive(Debug, Error)]
pub enum GsdError {
    /// Bad dimensions (zero-sized axis, unparsable spec string, ...).
    #[error("invalid dimensions: {0}")]
    InvalidDims(String),

    /// Two grids (or a grid and a model) disagree on shape.
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    /// A caller-supplied value violates a precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A step/time index falls outside the schedule or breaks ordering.
    #[error("index out of range: {0}")]
    IndexRange(String),

    /// The secret file does not carry enough bytes for the payload.
    #[error("secret data too short: requires {required} bytes, got {got}")]
    SecretTooShort { required: usize, got: usize },

    /// A NaN/Inf escaped from a numeric routine.
    #[error("non-finite value produced in {0}")]
    NonFinite(String),

    /// Training loss left the reals.
    #[error("training diverged at step {step}: loss is not finite")]
    Diverged { step: usize },

    /// Checkpoint file is corrupt or has the wrong layout.
    #[error("checkpoint format error: {0}")]
    CheckpointFormat(String),

    /// PGM/PPM/float-grid file is corrupt or unsupported.
    #[error("image format error: {0}")]
    ImageFormat(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Stable process exit codes for the CLI: 0 success, 1 usage error,
/// 2 data/format error, 3 numerical failure.
impl GsdError {
    pub fn exit_code(&self) -> u8 {
        match self {
            GsdError::InvalidDims(_)
            | GsdError::DimMismatch(_)
            | GsdError::InvalidArgument(_)
            | GsdError::IndexRange(_) => 1,
            GsdError::SecretTooShort { .. }
            | GsdError::CheckpointFormat(_)
            | GsdError::ImageFormat(_)
            | GsdError::Io(_) => 2,
            GsdError::NonFinite(_) | GsdError::Diverged { .. } => 3,
        }
    }
}
