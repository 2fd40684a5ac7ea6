//! Experiment configuration, runs, comparisons and packaged recipes.

mod compare;
mod config;
pub mod recipes;
mod run;

pub use compare::{compare_runs, ComparedRun, Comparison, ComparisonRow};
pub use config::{EvaluationConfig, ExperimentConfig, ModelSpec, Overrides, OUT_DIR_ENV};
pub use run::{
    evaluate, generate_dataset, initial_encoder, read_metrics, run_config_file, run_experiment, write_metrics, Dataset,
    RunOutcome, RunSummary, METRICS_FILE, SUMMARY_FILE,
};

#[cfg(test)]
mod tests;
