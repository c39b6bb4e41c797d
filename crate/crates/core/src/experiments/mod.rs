//! Experiment harness: declarative sweeps, per-trial records, summaries and
//! scaling fits.

pub mod config;
pub mod fit;
pub mod instances;
pub mod records;
pub mod runner;

pub use config::{ExperimentConfig, Format, ModelKind, Placement, PromiseCase, Suite};
pub use fit::{fit_scaling, scaling_fits, FitReport, Predictor};
pub use records::{read_csv, summarize, write_csv, RunRecord, Status, Summary};
pub use runner::{cells, derive_seed, run, run_trial, Cell, RunOutput};
