use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = AsteError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum AsteError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed corpus, dependency, prediction or config text.
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },

    #[error("line {line}: sentence has no {missing} annotation")]
    EmptyAnnotation { line: usize, missing: &'static str },

    #[error("line {line}: pair group {group} has {present} terms but no {missing} terms")]
    DanglingGroup {
        line: usize,
        group: usize,
        present: &'static str,
        missing: &'static str,
    },

    #[error("spans ({a_start},{a_end}) and ({b_start},{b_end}) overlap")]
    Overlap {
        a_start: usize,
        a_end: usize,
        b_start: usize,
        b_end: usize,
    },

    #[error("index {index} out of range for length {len}")]
    Index { index: usize, len: usize },

    #[error("expected {expected}-dimensional vector, found {found} ({context})")]
    Dimension {
        expected: usize,
        found: usize,
        context: String,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("prediction/gold misalignment: {0}")]
    Alignment(String),

    #[error("incompatible checkpoints: {0}")]
    Compatibility(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

impl AsteError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AsteError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(line: usize, message: impl Into<String>) -> Self {
        AsteError::Format {
            line,
            message: message.into(),
        }
    }

    /// Stable error name used in CLI diagnostics and FFI status mapping.
    pub fn name(&self) -> &'static str {
        match self {
            AsteError::Io { .. } => "IoError",
            AsteError::Format { .. } => "FormatError",
            AsteError::EmptyAnnotation { .. } => "EmptyAnnotationError",
            AsteError::DanglingGroup { .. } => "DanglingGroupError",
            AsteError::Overlap { .. } => "OverlapError",
            AsteError::Index { .. } => "IndexError",
            AsteError::Dimension { .. } => "DimensionError",
            AsteError::Shape(_) => "ShapeError",
            AsteError::Config(_) => "ConfigError",
            AsteError::Alignment(_) => "AlignmentError",
            AsteError::Compatibility(_) => "CompatibilityError",
            AsteError::Checkpoint(_) => "CheckpointError",
        }
    }
}
