//! Experiment sweeps: configuration, execution, CSV output, plots, reports.

pub mod config;
pub mod plot;
pub mod report;
pub mod results;
pub mod sweep;

pub use config::{EvalParams, ExperimentConfig, ExperimentKind, RobotParams, SyntheticParams};
pub use plot::emit_plots;
pub use report::render_report;
pub use results::{emit_csv, load_csv, Aggregate, CellResult, CellStatus, Metric, SweepResult};
pub use sweep::{run_sweep, RunOptions};
