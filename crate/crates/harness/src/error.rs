use thiserror::Error;

/// Harness failures, split by the exit code they map to.
#[derive(Debug, Error)]
pub enum HarnessError {
    /// Bad invocation: unknown format, missing or conflicting arguments.
    #[error("usage: {0}")]
    Usage(String),
    /// Unreadable, malformed or inconsistent input.
    #[error("{0}")]
    Data(String),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Usage(_) => 1,
            HarnessError::Data(_) => 2,
        }
    }

    /// Prefixes the message with where it happened.
    pub fn context(self, what: impl std::fmt::Display) -> Self {
        match self {
            HarnessError::Usage(m) => HarnessError::Usage(format!("{what}: {m}")),
            HarnessError::Data(m) => HarnessError::Data(format!("{what}: {m}")),
        }
    }
}

impl From<seqgc::Error> for HarnessError {
    fn from(e: seqgc::Error) -> Self {
        HarnessError::Data(e.to_string())
    }
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Data(e.to_string())
    }
}

impl From<serde_json::Error> for HarnessError {
    fn from(e: serde_json::Error) -> Self {
        HarnessError::Data(e.to_string())
    }
}

pub type HarnessResult<T> = std::result::Result<T, HarnessError>;
