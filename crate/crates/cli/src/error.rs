use std::process::ExitCode;

use supercaloric::closed_form::ClosedFormError;
use supercaloric::exponents::ExponentError;
use supercaloric::grid::GridError;
use supercaloric::harnack::HarnackError;
use supercaloric::integrability::IntegrabilityError;
use supercaloric::obstacle::ObstacleError;
use supercaloric::solver::SolverError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, unreadable or inconsistent input. Exit 2.
    #[error("invalid config: {0}")]
    Config(String),
    /// A well-posed request the numerics could not finish. Exit 3.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Config(_) => ExitCode::from(2),
            CliError::Numerical(_) => ExitCode::from(3),
        }
    }
}

impl From<ExponentError> for CliError {
    fn from(e: ExponentError) -> Self {
        match e {
            ExponentError::CapExceeded { .. } => CliError::Numerical(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<ClosedFormError> for CliError {
    fn from(e: ClosedFormError) -> Self {
        match e {
            ClosedFormError::QuadratureFailure(_) | ClosedFormError::BracketFailure(_) => {
                CliError::Numerical(e.to_string())
            }
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<GridError> for CliError {
    fn from(e: GridError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::PicardDivergence { .. } | SolverError::SingularSystem(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<ObstacleError> for CliError {
    fn from(e: ObstacleError) -> Self {
        match e {
            ObstacleError::Solver(inner) => inner.into(),
            ObstacleError::ProjectionStall { .. } => CliError::Numerical(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<HarnackError> for CliError {
    fn from(e: HarnackError) -> Self {
        match e {
            HarnackError::NonEvaluable { .. } => CliError::Numerical(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<IntegrabilityError> for CliError {
    fn from(e: IntegrabilityError) -> Self {
        match e {
            IntegrabilityError::Harnack(inner) => inner.into(),
            IntegrabilityError::Solver(inner) => inner.into(),
            IntegrabilityError::InconsistentVerdicts(_) | IntegrabilityError::NotSupersolution => {
                CliError::Numerical(e.to_string())
            }
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(e.to_string())
    }
}
