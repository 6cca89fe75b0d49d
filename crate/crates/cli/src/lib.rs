//! Command-line harness: dataset synthesis, quality assessment, method
//! comparison, loss ablation and timing, all emitting CSV and Markdown tables.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod table;
pub mod timing;

pub use error::{CliError, CliResult};
pub use table::ComparisonTable;
pub use timing::TimingReport;
