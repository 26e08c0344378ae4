//! Experiment harness for the `irgnm` library: configuration, replicated
//! runs over exposure times, noise-level and rate studies, model checks and
//! CSV output.

pub mod check;
pub mod config;
pub mod experiment;
pub mod output;
pub mod plot;
pub mod problem;
pub mod studies;

pub use config::ExperimentConfig;
pub use experiment::{run_experiment, ExperimentResult};
pub use studies::{run_errn_study, run_rate_study};
