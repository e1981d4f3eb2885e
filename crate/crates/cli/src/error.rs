use std::fmt;

use panoalign::{GeometryError, IoError, MetricsError, OptError};

/// Failure classes mapped to process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags or input files: exit 1.
    Validation(String),
    /// Numeric or system failure: exit 2.
    Runtime(String),
}

impl CliError {
    pub fn validation(msg: impl Into<String>) -> Self {
        CliError::Validation(msg.into())
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        CliError::Runtime(msg.into())
    }

    pub fn code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "{m}"),
            CliError::Runtime(m) => write!(f, "{m}"),
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        if e.is_validation() {
            CliError::Validation(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

impl From<OptError> for CliError {
    fn from(e: OptError) -> Self {
        match e {
            OptError::InvalidConfig(_) | OptError::Geometry(_) => CliError::Validation(e.to_string()),
            OptError::Diverged { .. } | OptError::NonFiniteGradient { .. } => {
                CliError::Runtime(e.to_string())
            }
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::EmptyOverlap | MetricsError::EmptyCloud => CliError::Runtime(e.to_string()),
            MetricsError::InvalidConfig(_) | MetricsError::Geometry(_) => {
                CliError::Validation(e.to_string())
            }
        }
    }
}

impl From<GeometryError> for CliError {
    fn from(e: GeometryError) -> Self {
        CliError::Validation(e.to_string())
    }
}
