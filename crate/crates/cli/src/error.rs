use std::process::ExitCode;

use firn::FirnError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("solver failure: {0}")]
    Solver(#[source] FirnError),

    #[error("could not write output: {0}")]
    Output(String),

    #[error("check failed: {0}")]
    CheckFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Config(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Output(_) | CliError::CheckFailed(_) => 1,
        })
    }

    pub fn output(e: impl std::fmt::Display) -> Self {
        CliError::Output(e.to_string())
    }
}

/// Bad meshes, parameters and inputs are configuration errors; everything else
/// raised while solving is a solver failure.
impl From<FirnError> for CliError {
    fn from(e: FirnError) -> Self {
        match e {
            FirnError::InvalidMesh(_)
            | FirnError::InvalidTimeGrid(_)
            | FirnError::InvalidParameter(_)
            | FirnError::DimensionMismatch { .. }
            | FirnError::NoCommonNodes => CliError::Config(e.to_string()),
            FirnError::Io(_) | FirnError::Csv(_) | FirnError::Json(_) => {
                CliError::Output(e.to_string())
            }
            other => CliError::Solver(other),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
