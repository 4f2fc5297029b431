//! Machine-parsable failure categories.
//!
//! Every runtime failure exits nonzero after printing a single line of the
//! form `error: <category>: <message>`.

use std::fmt;

use backbone_core::Error as CoreError;

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug)]
pub struct CliError {
    pub category: &'static str,
    pub message: String,
}

impl CliError {
    pub fn new(category: &'static str, message: impl Into<String>) -> Self {
        CliError {
            category,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        CliError::new("usage", message)
    }

    pub fn io(message: impl Into<String>) -> Self {
        CliError::new("io", message)
    }

    pub fn format(message: impl Into<String>) -> Self {
        CliError::new("format", message)
    }

    pub fn missing_artifact(message: impl Into<String>) -> Self {
        CliError::new("missing-artifact", message)
    }

    pub fn infeasible(message: impl Into<String>) -> Self {
        CliError::new("infeasible", message)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error: {}: {}", self.category, self.message)
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let category = match &e {
            CoreError::Io { .. } => "io",
            CoreError::Schema { .. } | CoreError::NonFinite { .. } | CoreError::Parse { .. } => {
                "format"
            }
            CoreError::DimensionMismatch { .. } => "format",
            CoreError::InvalidParam { .. }
            | CoreError::EmptyDataset
            | CoreError::EmptyTable { .. }
            | CoreError::ClassAbsent { .. } => "usage",
            CoreError::Divergence { .. } => "divergence",
            CoreError::CandidateCapExceeded { .. } | CoreError::UniverseTooLarge { .. } => {
                "cap-exceeded"
            }
            CoreError::NoCompletePattern => "infeasible",
            CoreError::NoCorrectBackbones => "missing-artifact",
        };
        CliError::new(category, e.to_string())
    }
}

/// Checks a pipeline input produced by an earlier stage.
pub fn require_artifact(path: &std::path::Path, what: &str) -> CliResult<()> {
    if !path.exists() {
        return Err(CliError::missing_artifact(format!(
            "{what} not found at {}; run the producing subcommand first",
            path.display()
        )));
    }
    Ok(())
}
