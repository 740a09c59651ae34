//! Experiment runner: configuration files, the end-to-end pipeline and its
//! output files.

mod config;
mod output;
mod run;

pub use config::{GeometryChoice, ModeSpec, NoiseKind, ProblemSpec, RunConfig, SCHEMA_VERSION};
pub use output::{emit_outputs, plot_data, PLOT_FILE, SUMMARY_FILE, TRACE_FILE};
pub use run::{
    build_setup, certify_config, default_out_dir, run_experiment, Constants, Experiment, Predicted, RunReport,
    Setup, L0_SAMPLES,
};
