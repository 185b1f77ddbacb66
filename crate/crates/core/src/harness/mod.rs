//! Experiment orchestration: per-home fit/transfer/evaluate pipelines over a
//! fleet, RMSE reports and a library of pre-trained models.

mod experiment;
mod library;
mod models;
mod summary;

pub use experiment::{
    read_records, run_experiment, summarize_records, write_records, ClusterChoice, ClusterReport,
    ControlSource, Exclusion, ExperimentConfig, FleetSource, GroupSummary, Method, RecordRef,
    RmseRecord, RmseReport, Scenario, EXPERIMENT_CONFIG_VERSION, RETRAIN_BUDGETS,
};
pub use library::{LibraryKey, ModelLibrary};
pub use models::{Evaluation, FitSettings, FittedModel, ModelKind, ARIMA_CONTEXT};
pub use summary::{quantile, summarize, Summary};
