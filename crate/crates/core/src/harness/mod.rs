//! Evaluation harness: dataset ingestion and splitting, run configuration,
//! pipeline execution, and accuracy metrics.

pub mod config;
pub mod dataset;
pub mod metrics;
pub mod runner;
