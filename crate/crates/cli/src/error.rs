use serde_json::Value;
use thiserror::Error;

use syncmatch::formats::FormatError;
use syncmatch::metrics::MetricsError;
use syncmatch::pipeline::PipelineError;
use syncmatch::synthetic::SceneError;
use syncmatch::SyncError;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    /// `detail` is printed to stdout as JSON.
    #[error("{message}")]
    Numerical { message: String, detail: Value },
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Numerical { .. } => EXIT_NUMERICAL,
            CliError::Io(_) => EXIT_IO,
        }
    }

    pub fn io(context: &str, err: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{context}: {err}"))
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<SceneError> for CliError {
    fn from(e: SceneError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::Csv(e) => CliError::Io(e.to_string()),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<SyncError> for CliError {
    fn from(e: SyncError) -> Self {
        let detail = match &e {
            SyncError::DisconnectedGraph { frame } => serde_json::json!({
                "error": "disconnected_graph",
                "frame": frame,
            }),
            SyncError::SynchronizationCollapse { frame, scale } => serde_json::json!({
                "error": "synchronization_collapse",
                "frame": frame,
                "scale": scale,
            }),
            other => {
                serde_json::json!({ "error": "synchronization", "message": other.to_string() })
            }
        };
        CliError::Numerical {
            message: e.to_string(),
            detail,
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Sync(s) => s.into(),
            PipelineError::InvalidInput(m) => CliError::Usage(m),
            PipelineError::AdjacentPairFailure {
                i,
                j,
                stage,
                ref reason,
            } => CliError::Numerical {
                message: e.to_string(),
                detail: serde_json::json!({
                    "error": "adjacent_pair_failure",
                    "pair": [i, j],
                    "stage": stage,
                    "reason": reason,
                }),
            },
        }
    }
}
