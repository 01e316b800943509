//! Experiment runner, sweeps, logs, and verification batteries.

pub mod config;
pub mod experiment;
pub mod log;
pub mod sweep;
pub mod verify;

pub use config::{AgentKind, ContextMode, EnvironmentFamily, ExperimentConfig};
pub use experiment::{build_environment, run_experiment, write_outputs, Learner, RunResult, RunSummary};
pub use log::{count_suboptimal, episodes_to_rate, windowed_rates, EpisodeRecord, GAP_TOLERANCE};
pub use sweep::{run_sweep, SweepRow};
pub use verify::{run_suite, Suite, SuiteReport};
