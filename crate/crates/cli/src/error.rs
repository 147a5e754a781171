use serde::Serialize;

use tosread_core::annotator::AnnotatorError;
use tosread_core::bundle::BundleError;
use tosread_core::corpus::CorpusError;
use tosread_core::gateway::GatewayError;
use tosread_core::scope::ScopeError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_REPLAY_MISS: i32 = 2;
pub const EXIT_PROVIDER: i32 = 3;

/// A failed command. Printed to stderr as JSON.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CliError {
    pub exit_code: i32,
    pub kind: &'static str,
    pub message: String,
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        Self {
            exit_code: EXIT_VALIDATION,
            kind: "validation",
            message: message.into(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self }).to_string()
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.kind, self.message)
    }
}

impl std::error::Error for CliError {}

impl From<GatewayError> for CliError {
    fn from(e: GatewayError) -> Self {
        let (exit_code, kind) = match &e {
            GatewayError::ReplayMiss { .. } => (EXIT_REPLAY_MISS, "replay_miss"),
            GatewayError::Provider(_) | GatewayError::NotConfigured(_) => (EXIT_PROVIDER, "provider"),
            _ => (EXIT_VALIDATION, "validation"),
        };
        Self {
            exit_code,
            kind,
            message: e.to_string(),
        }
    }
}

impl From<AnnotatorError> for CliError {
    fn from(e: AnnotatorError) -> Self {
        match e {
            AnnotatorError::Gateway(g) => g.into(),
            other => CliError::validation(other.to_string()),
        }
    }
}

impl From<ScopeError> for CliError {
    fn from(e: ScopeError) -> Self {
        match e {
            ScopeError::Gateway(g) => g.into(),
            other => CliError::validation(other.to_string()),
        }
    }
}

impl From<BundleError> for CliError {
    fn from(e: BundleError) -> Self {
        CliError::validation(e.to_string())
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::validation(e.to_string())
    }
}
