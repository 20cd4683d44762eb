//! Experiment driver: configs, seed-replicated runs, aggregation and output files.

pub mod checks;
mod config;
mod emit;
mod run;

pub use config::{
    BatchSize, InitSpec, OptimizerSpec, ProblemKind, ProblemSpec, RunConfig, SeedSpec,
};
pub use emit::{emit, summary_json, trace_csv, trace_path, CSV_HEADER, SCHEMA_VERSION};
pub use run::{
    build_problem, compare_suite, initial_iterate, run_experiment, run_experiment_with, run_seeds,
    run_single, summarize, sweep, Comparison, Execution, Quantiles, SeedFailure, SeedOutcome,
    StepStats, Summary, SweepResult, TraceRecord,
};
