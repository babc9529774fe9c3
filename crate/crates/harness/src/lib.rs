//! Experiment registry, runner and report writer for the `digs` sampling
//! library.

pub mod config;
pub mod error;
pub mod output;
pub mod registry;
pub mod run;

pub use config::{ExperimentConfig, SamplerKind, SamplerSpec, Tier};
pub use error::{HarnessError, Result};
pub use run::{ground_truth, run_experiment, sweep, RunReport, SweepResult};
