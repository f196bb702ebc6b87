//! Batch front end: reads a JSON run spec, runs a pricing, comparison,
//! axiom-check or tranche job and writes a CSV or JSON report.

pub mod error;
pub mod report;
pub mod run;
pub mod spec;

pub use error::CliError;
pub use report::{Report, ReportRow, VerdictCell};
pub use run::{run, Mode, Outcome};
pub use spec::{Format, OutputSpec, Overrides, PoolSpec, RunSpec};
