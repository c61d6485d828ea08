use serde_json::{json, Value};

/// Failure of a command, carrying enough context for a machine-readable report.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{message} (line {line}, column {column})")]
    Parse {
        message: String,
        line: usize,
        column: usize,
    },

    #[error("{0}")]
    Validation(String),

    #[error("{path}: {message}")]
    Io { path: String, message: String },

    #[error(transparent)]
    Domain(#[from] curved_nbody::Error),
}

impl CliError {
    pub fn name(&self) -> &'static str {
        match self {
            CliError::Parse { .. } => "ParseError",
            CliError::Validation(_) => "ValidationError",
            CliError::Io { .. } => "IoError",
            CliError::Domain(e) => e.name(),
        }
    }

    /// 1 for failures inside the numerical modules, 2 for bad input.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Domain(curved_nbody::Error::InvalidInput(_)) => 2,
            CliError::Domain(_) => 1,
            CliError::Parse { .. } | CliError::Validation(_) | CliError::Io { .. } => 2,
        }
    }

    pub fn to_json(&self) -> Value {
        let mut v = json!({
            "error": self.name(),
            "message": self.to_string(),
            "exit_code": self.exit_code(),
        });
        if let CliError::Parse { line, column, .. } = self {
            v["line"] = json!(line);
            v["column"] = json!(column);
        }
        v
    }
}

/// Domain errors raised while checking a scenario are input errors.
pub(crate) fn invalid(e: curved_nbody::Error) -> CliError {
    match e {
        curved_nbody::Error::InvalidInput(msg) => CliError::Validation(msg),
        e => CliError::Validation(format!("{}: {e}", e.name())),
    }
}
