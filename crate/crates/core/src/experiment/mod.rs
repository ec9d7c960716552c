//! End-to-end protocol: ε sweep on validation, replicate training, test
//! scoring and reporting.

mod config;
mod report;
mod run;

pub use config::{DatasetSource, Evaluation, ExperimentConfig, GridConfig, SplitConfig};
pub use report::{
    CellReport, Comparison, ExperimentOutput, ExperimentReport, ReplicateReport, ResultRow, SweepPoint,
    REPORT_FORMAT, REPORT_VERSION,
};
pub use run::run_experiment;
