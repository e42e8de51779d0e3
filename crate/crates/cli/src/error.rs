use std::fmt;

use irtcat::calibration::CalibrationError;
use irtcat::exercise::ExerciseError;
use irtcat::io::IoError;
use irtcat::simulator::SimError;

/// Failure classes, each with its own exit status.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CliError {
    /// Unreadable or unwritable files.
    Io(String),
    /// Malformed input data or configuration.
    Parse(String),
    /// Well-formed input that violates a constraint.
    Validation(String),
    /// Calibration stopped before meeting its tolerance.
    Convergence(String),
    /// A verified rerun produced different bytes.
    Mismatch(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Parse(_) => 2,
            CliError::Validation(_) => 3,
            CliError::Convergence(_) => 4,
            CliError::Mismatch(_) => 5,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (kind, msg) = match self {
            CliError::Io(m) => ("io error", m),
            CliError::Parse(m) => ("parse error", m),
            CliError::Validation(m) => ("validation error", m),
            CliError::Convergence(m) => ("convergence failure", m),
            CliError::Mismatch(m) => ("verification failed", m),
        };
        write!(f, "{kind}: {msg}")
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        match e {
            IoError::Io(e) => CliError::Io(e.to_string()),
            IoError::Model(e) => CliError::Validation(e.to_string()),
            other => CliError::Parse(other.to_string()),
        }
    }
}

impl From<CalibrationError> for CliError {
    fn from(e: CalibrationError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<ExerciseError> for CliError {
    fn from(e: ExerciseError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<toml::de::Error> for CliError {
    fn from(e: toml::de::Error) -> Self {
        CliError::Parse(format!("config: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Parse(format!("json: {e}"))
    }
}
