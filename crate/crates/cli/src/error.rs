use polvis_core::analytics::AnalyticsError;
use polvis_core::detection::DetectionError;
use polvis_core::interpret::InterpretError;
use polvis_core::io::{PnmError, TableError};
use polvis_core::training::checkpoint::CheckpointError;
use polvis_core::training::NetworkError;
use polvis_core::TensorError;
use thiserror::Error;

/// Command failure, classified by the exit code it maps to.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{context}: {message}")]
    Data { context: &'static str, message: String },
    #[error("{context}: {message}")]
    Numeric { context: &'static str, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data { .. } => 3,
            CliError::Numeric { .. } => 4,
        }
    }

    pub fn data(context: &'static str, e: impl std::fmt::Display) -> Self {
        CliError::Data {
            context,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::data("io", e)
    }
}

impl From<TableError> for CliError {
    fn from(e: TableError) -> Self {
        CliError::data("table", e)
    }
}

impl From<PnmError> for CliError {
    fn from(e: PnmError) -> Self {
        CliError::data("image", e)
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        CliError::data("checkpoint", e)
    }
}

impl From<TensorError> for CliError {
    fn from(e: TensorError) -> Self {
        CliError::data("tensor", e)
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::data("json", e)
    }
}

impl From<NetworkError> for CliError {
    fn from(e: NetworkError) -> Self {
        CliError::data("network", e)
    }
}

impl From<DetectionError> for CliError {
    fn from(e: DetectionError) -> Self {
        CliError::data("detection", e)
    }
}

impl From<InterpretError> for CliError {
    fn from(e: InterpretError) -> Self {
        CliError::data("gradcam", e)
    }
}

impl From<AnalyticsError> for CliError {
    fn from(e: AnalyticsError) -> Self {
        let context = "analytics";
        match e {
            AnalyticsError::ZeroVariance(_)
            | AnalyticsError::RankDeficient { .. }
            | AnalyticsError::NonFinite(_)
            | AnalyticsError::Negative(_) => CliError::Numeric {
                context,
                message: e.to_string(),
            },
            _ => CliError::data(context, e),
        }
    }
}
