//! Experiments, data ingestion and reports built on `tenrank-core`.
//!
//! - [`experiment`]: Monte-Carlo runs over simulation grids and their result tables.
//! - [`config`]: the TOML experiment description.
//! - [`ingest`]: CSV and binary series input.
//! - [`report`]: single-series rank reports, IC tuning and the lag diagnostic.

pub mod config;
pub mod error;
pub mod estimator;
pub mod experiment;
pub mod ingest;
pub mod prep;
pub mod report;

pub use config::ExperimentConfig;
pub use error::{Error, Result};
pub use estimator::{EstimatorSpec, RunSettings, Stage};
pub use experiment::{rank_metrics, run_experiment, ResultRow, ResultTable};
pub use ingest::{ingest_csv, CsvLayout};
pub use prep::demean;
