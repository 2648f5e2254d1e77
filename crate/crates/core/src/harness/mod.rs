//! Experiment grids, oracles, calibration and theorem checks.

pub mod calibrate;
pub mod experiment;
pub mod oracle;
pub mod see_trials;
pub mod stats;
pub mod verify;

pub use calibrate::{calibrate_thresholds, render_calibration, CalibrationSpec, CalibrationTable};
pub use experiment::{
    budget_outcome, load_traces, render_table, rows_from_cells, run_cells, run_experiment, save_traces, write_csv,
    ExperimentSpec, MetricsRow, NamedNoise, NamedScenario, ScenarioKind,
};
pub use oracle::brute_force_min_steps;
pub use see_trials::{run_see_trials, SeeTrialOutcome, SeeTrialSpec};
pub use verify::{render_report, verify_theorems, VerifyConfig, VerifyReport};
