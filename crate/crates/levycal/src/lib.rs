//! Driver around `levycal-core`: configuration, sample files, financial
//! preprocessing, experiment runs and their reports.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod experiment;
pub mod preprocess;
pub mod report;
pub mod samples;

pub use config::RunConfig;
pub use error::{CliError, Result};
pub use experiment::{
    calibration_problem, config_from_report, gaussian_baseline, run_experiment, simulate_values, BaselineFit,
    Experiment,
};
pub use preprocess::{preprocess_financial, torus_moments, OutOfBand, PreprocessSpec, Preprocessed, TorusMoments};
pub use report::{Histogram, RunReport};
pub use samples::{ingest_samples, read_samples, write_samples};
