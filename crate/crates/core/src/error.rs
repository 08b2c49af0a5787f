use std::io;

use thiserror::Error;

use crate::network::weights::WeightsError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {left} vs {right}")]
    ShapeMismatch { left: String, right: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("image dimensions {h}x{w} must be multiples of {multiple}")]
    BadDimensions { h: usize, w: usize, multiple: usize },

    #[error("tap index {tap} out of range (network has {count} taps)")]
    TapOutOfRange { tap: usize, count: usize },

    #[error("optimizer diverged at iteration {iteration}: loss = {loss}")]
    Divergence { iteration: usize, loss: f32 },

    #[error("image decode failed: {0}")]
    Decode(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Weights(#[from] WeightsError),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn shape(left: impl std::fmt::Debug, right: impl std::fmt::Debug) -> Self {
        Error::ShapeMismatch {
            left: format!("{left:?}"),
            right: format!("{right:?}"),
        }
    }

    /// Process exit code used by the `dnr` binary.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Decode(_) => 2,
            Error::Config(_) => 3,
            Error::Divergence { .. } => 4,
            _ => 1,
        }
    }
}
