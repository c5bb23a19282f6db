//! Config-driven seeded ensembles: per-seed rows, mean and sample standard
//! deviation per transform, and CSV/JSON export.

mod config;
mod report;
mod run;

pub use config::{ExperimentConfig, KdeSettings, TransformEntry};
pub use report::{
    export_report, parse_report_csv, report_to_csv, report_to_json, summarize, ParsedCsv, Report,
    ReportFormat, SeedFailure, SeedRow, Summary, Values, CSV_HEADER,
};
pub use run::{run_experiment, run_experiment_with_jobs, run_seed};
