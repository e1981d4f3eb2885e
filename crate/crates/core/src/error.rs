use thiserror::Error;

/// Errors raised by the closed-form geometry routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("pixel ({u}, {v}) outside a {width}x{height} image")]
    PixelOutOfRange {
        u: f64,
        v: f64,
        width: usize,
        height: usize,
    },
    #[error("ray has non-positive depth ({z}) on selected face {face}")]
    DegenerateRay { face: usize, z: f64 },
    #[error("invalid depth {value} at pixel ({x}, {y})")]
    InvalidDepth { x: usize, y: usize, value: f64 },
    #[error("grid dimensions {width}x{height} are not a 2:1 equirectangular layout")]
    NotEquirectangular { width: usize, height: usize },
    #[error("grid size mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },
}

/// Errors raised by the graph optimizer.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptError {
    #[error("non-finite gradient in {parameter} at index {index}")]
    NonFiniteGradient { parameter: &'static str, index: usize },
    #[error("level {level}: final loss {final_loss} exceeds initial loss {initial_loss}")]
    Diverged {
        level: usize,
        initial_loss: f64,
        final_loss: f64,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Errors raised by the evaluation metrics.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("no overlapping valid pixels")]
    EmptyOverlap,
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("invalid evaluation setting: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Errors raised while reading or writing files.
#[derive(Debug, Error)]
pub enum IoError {
    #[error("unsupported format for {0}")]
    UnsupportedFormat(String),
    #[error("corrupt header: {0}")]
    CorruptHeader(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("parse error in {path} (line {line}, column {column}): {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("validation error: {field}: {message}")]
    Validation { field: String, message: String },
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("png: {0}")]
    Png(String),
}

impl IoError {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        IoError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        IoError::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by bad user input rather than runtime failures.
    pub fn is_validation(&self) -> bool {
        !matches!(self, IoError::Io { .. })
    }
}
