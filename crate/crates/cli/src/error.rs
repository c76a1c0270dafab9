use std::fmt;
use std::path::PathBuf;

use serde_json::json;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or flag values.
    Usage(String),
    /// Unreadable, malformed or inconsistent configuration.
    Config(String),
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    Core(brp_cfo::Error),
}

impl CliError {
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Config(_) => "config",
            CliError::Io { .. } => "io",
            CliError::Core(e) => e.code(),
        }
    }

    /// 2 for problems with the invocation, 1 for failures while running.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            CliError::Core(brp_cfo::Error::InvalidParameter(_)) => 2,
            _ => 1,
        }
    }

    /// Single-line JSON record for standard error.
    pub fn to_json_line(&self) -> String {
        json!({ "error": { "code": self.code(), "message": self.to_string() } }).to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Config(m) => f.write_str(m),
            CliError::Io { path, source } => write!(f, "{}: {source}", path.display()),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<brp_cfo::Error> for CliError {
    fn from(e: brp_cfo::Error) -> Self {
        CliError::Core(e)
    }
}

pub type CliResult<T> = Result<T, CliError>;
