//! Experiment orchestration: data preparation, replicated sampler runs,
//! convergence traces against the cubic-op count and their aggregation.

pub mod config;
pub mod data;
pub mod experiment;
pub mod trace;

pub use config::{default_schedule, Auto, ExperimentConfig, SamplerId};
pub use data::{load_dataset, read_csv, synthetic_dataset, LoadOptions};
pub use experiment::{
    aggregate_csv, comparison_csv, load_config_dataset, manifest, prepare, run_experiment, run_prepared,
    run_replicate, run_sweep, trace_csv, write_outputs, write_sweep, ExperimentOutput, Model, Prepared,
};
pub use trace::{
    iqr_aggregate, log_grid, quantile_sorted, stabilization_point, trace_grid, ConvergenceTrace, IqrCurve,
    IqrPoint, RunningMean,
};
