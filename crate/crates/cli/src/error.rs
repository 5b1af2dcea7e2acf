//! Pipeline error taxonomy mapped onto the process exit codes: 1 for
//! user/config errors, 2 for data errors, 3 for backend/transport exhaustion.

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{message}")]
    Config { message: String },
    #[error("{message}")]
    Data { message: String },
    #[error("{message}")]
    Transport { message: String },
}

impl PipelineError {
    pub fn config(message: impl Into<String>) -> Self {
        PipelineError::Config {
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        PipelineError::Data {
            message: message.into(),
        }
    }

    pub fn transport(message: impl Into<String>) -> Self {
        PipelineError::Transport {
            message: message.into(),
        }
    }

    pub fn io(context: &str, path: &Path, source: std::io::Error) -> Self {
        PipelineError::Data {
            message: format!("{context} {}: {source}", path.display()),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            PipelineError::Config { .. } => "config",
            PipelineError::Data { .. } => "data",
            PipelineError::Transport { .. } => "transport",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config { .. } => 1,
            PipelineError::Data { .. } => 2,
            PipelineError::Transport { .. } => 3,
        }
    }

    /// One-line machine-parseable diagnostic for the error stream.
    pub fn machine_line(&self) -> String {
        serde_json::json!({
            "error": self.kind(),
            "message": self.to_string(),
        })
        .to_string()
    }
}

pub type Result<T> = std::result::Result<T, PipelineError>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_contract() {
        assert_eq!(PipelineError::config("x").exit_code(), 1);
        assert_eq!(PipelineError::data("x").exit_code(), 2);
        assert_eq!(PipelineError::transport("x").exit_code(), 3);
    }

    #[test]
    fn machine_line_is_single_line_json() {
        let line = PipelineError::data("bad\nthing").machine_line();
        assert!(!line.contains('\n'));
        let value: serde_json::Value = serde_json::from_str(&line).unwrap();
        assert_eq!(value["error"], "data");
    }
}
