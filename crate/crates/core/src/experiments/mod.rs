//! Experiment grids over targets, training-set sizes, regimes and prompt
//! lengths, with CSV and markdown reports.

mod config;
mod run;
mod table;

pub use config::{ExperimentConfig, SourceSpec, TargetSpec};
pub use run::{
    pretrain_on, results_path, run_cell, run_experiment, source_splits, subsample_seed,
    target_splits, write_splits, CellResult, Pretrained, TargetData,
};
pub use table::{report, ReportFormat, ResultRow, ResultTable, CSV_HEADER};
