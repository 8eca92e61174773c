use std::path::PathBuf;

use thiserror::Error;

use crate::adjust::AdjustError;
use crate::gaussian::GaussianError;
use crate::inference::InferenceError;
use crate::metrics::MetricsError;
use crate::models::ModelError;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("column `{0}` not found in header")]
    MissingColumn(String),
    #[error("non-numeric value `{value}` at row {row}, column `{column}`")]
    NonNumericFeature {
        row: usize,
        column: String,
        value: String,
    },
    #[error("dataset has no rows after filtering")]
    EmptyDataset,
    #[error("split leaves {n_train} training and {n_test} test rows")]
    DegenerateSplit { n_train: usize, n_test: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("run {index} failed: {source}")]
    Run {
        index: usize,
        #[source]
        source: Box<PipelineError>,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Adjust(#[from] AdjustError),
    #[error(transparent)]
    Gaussian(#[from] GaussianError),
}

impl PipelineError {
    /// Errors caused by the user's inputs (configuration, file schema) rather
    /// than by a computation failing on valid inputs.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            PipelineError::FileNotFound(_)
                | PipelineError::MissingColumn(_)
                | PipelineError::NonNumericFeature { .. }
                | PipelineError::EmptyDataset
                | PipelineError::InvalidConfig(_)
                | PipelineError::Gaussian(GaussianError::InvalidParameter(_))
        )
    }
}
