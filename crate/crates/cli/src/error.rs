use simeval_core::benchmark_io::{ParseError, ValidationError};
use simeval_core::embedding::EmbeddingError;
use simeval_core::metrics::MetricError;
use simeval_core::protocols::ProtocolError;
use simeval_core::report::ReportError;
use thiserror::Error;

/// Failures mapped onto the process exit-code contract.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Provider(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Provider(_) => 3,
        }
    }

    pub fn data_in(path: &std::path::Path, err: impl std::fmt::Display) -> Self {
        CliError::Data(format!("{}: {err}", path.display()))
    }
}

impl From<EmbeddingError> for CliError {
    fn from(e: EmbeddingError) -> Self {
        match e {
            EmbeddingError::StoreFormat { .. } | EmbeddingError::Cache(_) => {
                CliError::Data(e.to_string())
            }
            e => CliError::Provider(e.to_string()),
        }
    }
}

impl From<ProtocolError> for CliError {
    fn from(e: ProtocolError) -> Self {
        match e {
            ProtocolError::Embedding(e) => e.into(),
            ProtocolError::Metric(e) => CliError::Data(e.to_string()),
        }
    }
}

impl From<MetricError> for CliError {
    fn from(e: MetricError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ParseError> for CliError {
    fn from(e: ParseError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ValidationError> for CliError {
    fn from(e: ValidationError) -> Self {
        CliError::Data(e.to_string())
    }
}
