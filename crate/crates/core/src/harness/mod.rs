//! Configured experiments, reports and artifacts.

pub mod config;
pub mod experiments;
pub mod report;
pub mod suite;

pub use config::{Experiment, ExperimentConfig, Scales, SuiteConfig, EXPERIMENT_NAMES};
pub use experiments::{folded_jump_law, jump_law_summary, Context, JumpLawSummary};
pub use report::{Estimate, StatReport, Status, TestResult};
pub use suite::{run_suite, run_suite_file, SuiteOptions, SuiteReport};
