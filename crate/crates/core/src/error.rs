//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// The 3x3 mass matrix of the reference model could not be inverted.
    #[error("singular mass matrix: {0}")]
    SingularMassMatrix(String),

    /// A simulated state became NaN or infinite.
    #[error("non-finite state at step {step}: {what}")]
    NonFiniteState { step: usize, what: String },

    /// A rollout inside a training window diverged.
    #[error("non-finite rollout in window {window} at step {step}")]
    NonFiniteRollout { window: usize, step: usize },

    /// Matrix/vector dimensions do not agree.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A finite-memory forward pass got the wrong number of frames.
    #[error("expected {expected} input frames, got {got}")]
    WrongFrameCount { expected: usize, got: usize },

    /// The acceleration loss needs measured accelerations in the dataset.
    #[error("dataset carries no accelerations (trajectory {0})")]
    MissingAcceleration(usize),

    /// Train/validation split left one side empty.
    #[error("degenerate split: {0}")]
    DegenerateSplit(String),

    /// A standardization channel has zero spread.
    #[error("degenerate channel '{0}': standard deviation is zero")]
    DegenerateChannel(&'static str),

    /// A data or config file failed to parse.
    #[error("{path}:{line}: {what}")]
    MalformedFile {
        path: String,
        line: usize,
        what: String,
    },

    /// File declares a schema version this build does not speak.
    #[error("{path}: schema version {got}, expected {expected}")]
    SchemaVersion {
        path: String,
        got: String,
        expected: u32,
    },

    /// A key=value file contains a key outside the documented list.
    #[error("{path}:{line}: unknown key '{key}'")]
    UnknownKey {
        path: String,
        line: usize,
        key: String,
    },

    /// Two series that must align have different lengths.
    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
