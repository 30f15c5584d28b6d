use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("I/O failure: {0}")]
    Io(String),
    #[error("numeric failure: {0}")]
    Numeric(#[from] cirlt_core::Error),
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Io(e.to_string())
    }
}

impl From<csv::Error> for HarnessError {
    fn from(e: csv::Error) -> Self {
        HarnessError::Io(e.to_string())
    }
}

/// Machine-readable error line written to stderr by the CLI.
#[derive(Debug, Serialize)]
pub struct ErrorRecord {
    pub kind: &'static str,
    pub message: String,
    pub exit_code: i32,
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Numeric(_) => 3,
            HarnessError::Io(_) => 1,
        }
    }

    pub fn record(&self) -> ErrorRecord {
        ErrorRecord {
            kind: match self {
                HarnessError::Config(_) => "config_invalid",
                HarnessError::Numeric(_) => "numeric_failure",
                HarnessError::Io(_) => "io_failure",
            },
            message: self.to_string(),
            exit_code: self.exit_code(),
        }
    }
}
