use std::fmt;

use serde_json::json;

/// Failure classes; each maps to a distinct exit code.
#[derive(Debug)]
pub enum Failure {
    /// Unreadable or malformed config (exit 2).
    Config(String),
    /// Well-formed config with inadmissible values (exit 2).
    Validation(String),
    /// The scenario itself failed (exit 1).
    Run(String),
    /// An oracle comparison ran but did not hold (exit 3).
    Check(String),
    /// Artifacts could not be written (exit 1).
    Io(String),
}

impl Failure {
    pub fn kind(&self) -> &'static str {
        match self {
            Failure::Config(_) => "config",
            Failure::Validation(_) => "validation",
            Failure::Run(_) => "run",
            Failure::Check(_) => "check",
            Failure::Io(_) => "io",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) | Failure::Validation(_) => 2,
            Failure::Run(_) | Failure::Io(_) => 1,
            Failure::Check(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Validation(m) | Failure::Run(m) | Failure::Check(m) | Failure::Io(m) => m,
        }
    }

    /// One-line JSON error record.
    pub fn record(&self) -> String {
        json!({
            "status": "error",
            "kind": self.kind(),
            "exit_code": self.exit_code(),
            "message": self.message(),
        })
        .to_string()
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} error: {}", self.kind(), self.message())
    }
}

impl From<sllm::Error> for Failure {
    fn from(e: sllm::Error) -> Self {
        Failure::Run(e.to_string())
    }
}
