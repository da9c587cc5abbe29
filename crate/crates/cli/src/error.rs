use std::fmt;
use std::process::ExitCode;

/// Process exit status contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Ok = 0,
    Validation = 1,
    Input = 2,
    Empty = 3,
}

impl From<Exit> for ExitCode {
    fn from(e: Exit) -> Self {
        ExitCode::from(e as u8)
    }
}

#[derive(Debug)]
pub struct CliError {
    pub exit: Exit,
    pub message: String,
}

impl CliError {
    pub fn input(message: impl fmt::Display) -> Self {
        Self { exit: Exit::Input, message: message.to_string() }
    }

    pub fn validation(message: impl fmt::Display) -> Self {
        Self { exit: Exit::Validation, message: message.to_string() }
    }

    pub fn empty(message: impl fmt::Display) -> Self {
        Self { exit: Exit::Empty, message: message.to_string() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        Self::input(format!("{e:#}"))
    }
}

pub type CliResult<T> = Result<T, CliError>;
