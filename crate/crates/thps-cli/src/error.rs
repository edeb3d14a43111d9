//! CLI error taxonomy mapped to exit codes: 2 config, 3 numerical, 4 I/O.
//! Every error renders as a single line with a machine-parsable prefix.

use std::fmt;

#[derive(Debug, Clone)]
pub enum CliError {
    Config(String),
    Numerical(String),
    Io(String),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        CliError::Numerical(msg.into())
    }

    pub fn io(msg: impl Into<String>) -> Self {
        CliError::Io(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (tag, msg) = match self {
            CliError::Config(m) => ("config", m),
            CliError::Numerical(m) => ("numerical", m),
            CliError::Io(m) => ("io", m),
        };
        // Single line: newlines would break the machine-parsable contract.
        write!(f, "error[{tag}]: {}", msg.replace('\n', " "))
    }
}

impl std::error::Error for CliError {}

impl From<thps::Error> for CliError {
    fn from(e: thps::Error) -> Self {
        use thps::Error::*;
        match e {
            MeshFormat(_) | UnknownBuiltin(_) | InvalidDegree(_) => CliError::Config(e.to_string()),
            MeshInvalid(_) | Singular { .. } | ProjectionFailed { .. } | Numerical(_) => {
                CliError::Numerical(e.to_string())
            }
            Io(err) => CliError::Io(err.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
