//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// Model id is not present in the encoder registry.
    #[error("unknown model id `{0}`: not in the encoder registry")]
    UnknownModel(String),

    /// A requested compute device cannot be used by the selected backend.
    #[error("device `{device}` unavailable: {reason}")]
    Device { device: String, reason: String },

    /// The registry entry is valid but its weights are not in the local cache.
    /// Callers that treat real encoders as optional should match on this
    /// variant and skip.
    #[error(
        "weights for `{model_id}` not found at {path}; download the checkpoint \
         there or point CLIP_REWARD_CACHE at a directory that contains it"
    )]
    WeightsUnavailable { model_id: String, path: PathBuf },

    /// The registry entry carries metadata only; no inference backend for it
    /// is compiled into this build.
    #[error("no inference backend for `{model_id}`: {reason}")]
    BackendUnavailable { model_id: String, reason: String },

    /// Malformed input that fails a precondition.
    #[error("validation: {0}")]
    Validation(String),

    /// A numeric precondition failed (zero norms, non-finite values).
    #[error("numeric: {0}")]
    Numeric(String),

    /// An operation was invoked on a model or adapter that is not configured
    /// for it.
    #[error("configuration: {0}")]
    Config(String),

    /// Goal and baseline prompts embed to (nearly) the same point, so the
    /// goal-baseline direction is undefined. Usually a prompt-design problem.
    #[error(
        "degenerate baseline: goal and baseline embeddings coincide \
         (distance {distance:.3e} <= {epsilon:.1e}); rephrase the prompts"
    )]
    DegenerateBaseline { distance: f64, epsilon: f64 },

    /// A distribution required for correlation has zero variance
    /// (constant rewards, or labels that are all one class).
    #[error("degenerate distribution: {0}")]
    DegenerateDistribution(String),

    /// The requested feature needs a component that is not installed or not
    /// compiled into this build.
    #[error("capability: {0}")]
    Capability(String),

    /// Unknown environment id.
    #[error("unknown environment id `{0}`")]
    UnknownEnv(String),

    /// A label file record failed schema validation.
    #[error("label file {path}:{line}: {message}")]
    LabelSchema {
        path: String,
        line: usize,
        message: String,
    },

    /// A checkpoint does not match the environment or algorithm it is used with.
    #[error("checkpoint mismatch: {0}")]
    CheckpointMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("image codec: {0}")]
    Image(String),

    #[error("serialization: {0}")]
    Serialization(String),
}

impl Error {
    /// True for errors caused by bad user input (config, files, arguments)
    /// rather than by a failure at run time. The CLI maps these to exit
    /// code 1 and everything else to 2.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::UnknownModel(_)
                | Error::Validation(_)
                | Error::Config(_)
                | Error::DegenerateBaseline { .. }
                | Error::DegenerateDistribution(_)
                | Error::UnknownEnv(_)
                | Error::LabelSchema { .. }
                | Error::CheckpointMismatch(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
