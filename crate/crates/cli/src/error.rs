use std::fmt;

/// CLI failure, split by exit code: configuration problems exit with 2,
/// everything that goes wrong while running exits with 1.
#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        CliError::Runtime(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Runtime(_) => "runtime",
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Runtime(m) => m,
        }
    }

    /// Single-line JSON for standard error.
    pub fn to_json(&self) -> String {
        serde_json::json!({
            "error": { "kind": self.kind(), "exit_code": self.exit_code(), "message": self.message() }
        })
        .to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} error: {}", self.kind(), self.message())
    }
}

impl std::error::Error for CliError {}

pub type CliResult<T> = Result<T, CliError>;

pub(crate) trait ConfigContext<T> {
    fn config_err(self) -> CliResult<T>;
    fn runtime_err(self) -> CliResult<T>;
}

impl<T, E: fmt::Display> ConfigContext<T> for Result<T, E> {
    fn config_err(self) -> CliResult<T> {
        self.map_err(|e| CliError::Config(e.to_string()))
    }

    fn runtime_err(self) -> CliResult<T> {
        self.map_err(|e| CliError::Runtime(e.to_string()))
    }
}
