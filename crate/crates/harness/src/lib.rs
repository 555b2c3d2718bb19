//! Experiment driver around `halypo-core`: JSON run configs, seed sweeps,
//! CSV/JSON trajectory persistence, standalone SVG plots, and runnable
//! validation suites. The `halypo` binary fronts all of it.

pub mod config;
pub mod persist;
pub mod plot;
pub mod runner;
pub mod validate;

pub use config::{ConfigError, GameSpec, OutputPaths, RunConfig, Theta0};
pub use persist::{
    load_csv, load_json, parse_csv, records_to_csv, write_csv, write_json, PersistError,
    CSV_HEADER,
};
pub use plot::{render_plot, PlotConfig, PlotError, Series};
pub use runner::{run_experiment, sweep, ExperimentLog, HarnessError, SweepReport};
pub use validate::{
    fd_independent_field, random_quadratic, run_suite, CheckResult, ValidateError,
    ValidationReport, MARKOV_THETA0, SUITE_NAMES,
};
