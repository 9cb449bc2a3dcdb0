//! Errors of the command-line layer and their exit codes.

use std::path::PathBuf;

use aopt_core::error::Error as CoreError;

/// Everything that can stop a command.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// The configuration or an input file is malformed or out of range.
    #[error("invalid configuration: {0}")]
    Config(String),
    /// Reading or writing a file failed.
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// A kernel reported a failure.
    #[error(transparent)]
    Core(#[from] CoreError),
    /// A verification command ran but its check did not hold.
    #[error("check failed: {0}")]
    Check(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    /// 2 for validation errors, 3 for solver and I/O failures, 4 for failed
    /// checks.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Io { .. } => 3,
            Self::Core(e) => {
                if is_validation(e) {
                    2
                } else {
                    3
                }
            }
            Self::Check(_) => 4,
        }
    }
}

fn is_validation(e: &CoreError) -> bool {
    matches!(
        e,
        CoreError::InadmissibleProfile(_)
            | CoreError::TraceViolation(_)
            | CoreError::GridTooCoarse(_)
            | CoreError::ShapeMismatch { .. }
            | CoreError::UnsupportedAbsorbingCoefficients { .. }
            | CoreError::UnknownEdge
            | CoreError::InvalidParameter(_)
    )
}

pub type Result<T> = std::result::Result<T, CliError>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_error_class() {
        assert_eq!(CliError::Config("x".into()).exit_code(), 2);
        assert_eq!(CliError::Core(CoreError::InvalidParameter("c".into())).exit_code(), 2);
        assert_eq!(CliError::Core(CoreError::NonDegeneracyViolated { step: 1, margin: 0.0 }).exit_code(), 3);
        assert_eq!(CliError::Core(CoreError::SingularSystem { row: 0 }).exit_code(), 3);
        assert_eq!(CliError::Check("gradcheck".into()).exit_code(), 4);
    }
}
