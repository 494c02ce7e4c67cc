//! Experiment orchestration: configuration, repeated runs of each cell,
//! CSV emission, dataset persistence, paper presets and the property-suite
//! verifier.

pub mod config;
pub mod io;
pub mod presets;
pub mod run;
pub mod verify;

pub use config::{ExperimentSpec, PenaltyRule, SPEC_VERSION};
pub use run::{run_experiment, ExperimentOutcome, RunSummary};
