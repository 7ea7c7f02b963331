//! Experiment configuration, synthetic data, seam metrics, and the runs
//! behind the command-line tool.

mod config;
mod experiment;
mod metrics;
mod synth;

pub use config::{BackboneKind, BucketMode, ExperimentConfig, OracleParams};
pub use experiment::{
    build_backbone, closed_form_costs, compare_strategies, prepare, run_experiment, simulate, sweep_alpha,
    toy_config_for, toy_gradcheck, toy_training_set, trace_windows, write_rows, ClosedFormCosts,
    ExperimentOutcome, Prepared, ResultRow,
};
pub use metrics::{clip_boundaries, seam_metric, SeamReport};
pub use synth::{gen_synthetic, SyntheticData, SyntheticKind, SyntheticParams};
