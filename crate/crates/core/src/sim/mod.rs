//! Scenario generators, simulation studies and file I/O.

pub mod experiment;
pub mod io;
pub mod scenario;

pub use experiment::{
    run_experiment, run_level_experiment, run_power_experiment, ExperimentResult, ExperimentSpec,
    ExperimentTable, ThresholdSpec, TrialOutcome,
};
pub use io::{format_csv, parse_csv, read_csv, write_csv, write_report};
pub use scenario::{generate, Change, Model, Scenario};
