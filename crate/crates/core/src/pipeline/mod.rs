//! Batch orchestration: file formats, the two-pass genome-wide run and the
//! validation reports.

pub mod config;
pub mod diagnostics;
pub mod io;
pub mod run;
pub mod validate;

pub use config::RunConfig;
pub use run::{analyze, run_genome, GeneRow, Manifest, RunOutcome};
