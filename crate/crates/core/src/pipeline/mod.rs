//! Dataset ingestion, seeded train/test splits and the repeated-split
//! experiment harness, plus the single-split audit, adjustment and
//! simulation workflows exposed by the command-line tool.

mod curves;
mod data;
mod error;
mod experiment;
mod workflows;

pub use curves::{average_curves, AveragedCurve};
pub use data::{load_dataset, split, ColumnRoles, LoadedDataset};
pub use error::PipelineError;
pub use experiment::{
    run_experiment, run_experiment_on, write_experiment, AggregateMetric, ConditionalSample,
    ExperimentConfig, ExperimentResult, FitSummary, Histogram, Protocol,
};
pub use workflows::{
    adjust_scores, audit_scores, simulate, write_adjustment, write_audit, write_simulation,
    AdjustOutput, AuditOutput, ClosedForm, ScoreSource, SimulationConfig, SimulationOutput,
};

pub type Result<T> = std::result::Result<T, PipelineError>;
