//! Command-line front end for `deul-core`: configuration files, subcommands,
//! CSV/JSON/SVG output and the acceptance suite (`verify-all`).

pub mod commands;
pub mod config;
pub mod output;
pub mod plot;
pub mod verify;

use thiserror::Error;

/// Errors surfaced by the command-line layer.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] deul_core::Error),

    #[error("I/O error on {path}: {source}")]
    Io { path: String, source: std::io::Error },

    #[error("plot error: {0}")]
    Plot(String),
}

impl CliError {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        CliError::Io { path: path.as_ref().display().to_string(), source }
    }

    /// Exit code: 2 for configuration / parameter errors, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(deul_core::Error::InvalidParameter(_) | deul_core::Error::Domain(_) | deul_core::Error::Usage(_)) => 2,
            _ => 1,
        }
    }

    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Core(_) => "numerical",
            CliError::Io { .. } => "io",
            CliError::Plot(_) => "plot",
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Outcome of one named check executed by a subcommand.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), pass, detail: detail.into() }
    }
}

/// Exit code of a finished subcommand: 0 iff every executed check passed.
pub fn checks_exit_code(checks: &[Check]) -> i32 {
    if checks.iter().all(|c| c.pass) {
        0
    } else {
        1
    }
}

/// Machine-readable failure summary (one JSON object) for standard error.
pub fn failure_summary(command: &str, checks: &[Check], error: Option<&CliError>) -> Option<String> {
    let failed: Vec<&Check> = checks.iter().filter(|c| !c.pass).collect();
    if failed.is_empty() && error.is_none() {
        return None;
    }
    let value = serde_json::json!({
        "status": if error.is_some() { "error" } else { "fail" },
        "command": command,
        "exit_code": error.map(|e| e.exit_code()).unwrap_or(1),
        "error_kind": error.map(|e| e.kind()),
        "error": error.map(|e| e.to_string()),
        "failed_checks": failed,
    });
    Some(value.to_string())
}
