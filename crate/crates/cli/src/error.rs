use std::fmt;
use std::path::Path;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or unreadable inputs.
    Usage(String),
    Core(erval_core::Error),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(e) if e.is_validation() => 1,
            CliError::Core(_) | CliError::Runtime(_) => 2,
        }
    }

    pub fn unreadable(path: &Path, e: impl fmt::Display) -> Self {
        CliError::Usage(format!("cannot read `{}`: {e}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
            CliError::Core(e) => e.fmt(f),
        }
    }
}

impl From<erval_core::Error> for CliError {
    fn from(e: erval_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
