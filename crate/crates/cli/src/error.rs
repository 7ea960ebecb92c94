use memoshare::bigstep::EvalError;
use memoshare::machine::MachineError;
use memoshare::{LoadError, ParseError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Stuck(String),
    #[error("{0}")]
    Budget(String),
    #[error("{0}")]
    Disagreement(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Parse(_) => 2,
            CliError::Stuck(_) => 3,
            CliError::Budget(_) => 4,
            CliError::Disagreement(_) => 5,
            CliError::Io(_) | CliError::Other(_) => 1,
        }
    }
}

impl From<ParseError> for CliError {
    fn from(e: ParseError) -> Self {
        CliError::Parse(format!("parse error at {e}"))
    }
}

impl From<LoadError> for CliError {
    fn from(e: LoadError) -> Self {
        CliError::Parse(e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Stuck { .. } => CliError::Stuck(e.to_string()),
            EvalError::BudgetExceeded { .. } => CliError::Budget(e.to_string()),
            _ => CliError::Other(e.to_string()),
        }
    }
}

impl From<MachineError> for CliError {
    fn from(e: MachineError) -> Self {
        match e {
            MachineError::Stuck { .. } => CliError::Stuck(e.to_string()),
            MachineError::BudgetExceeded { .. } => CliError::Budget(e.to_string()),
            _ => CliError::Other(e.to_string()),
        }
    }
}
