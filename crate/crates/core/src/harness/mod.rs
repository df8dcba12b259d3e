//! Experiment orchestration: the (task × strategy × init) matrix, subgroup
//! analysis and report artifacts.

mod config;
mod corpus;
mod matrix;
mod report;
mod subgroup;

pub use config::{desk_model, ExperimentConfig, ExperimentSpec, InitMode, PretrainingConfig};
pub use corpus::{complex_prompts, dataset_corpus, synthetic_corpus};
pub use matrix::{
    run_matrix, BreadthEntry, CellResult, CellStatus, FoldPrediction, FoldResult, InitComparison, ReportBundle,
    REPORT_SCHEMA_VERSION,
};
pub use report::{
    breadth_csv, cells_csv, comparison_csv, comparison_markdown, emit_report, folds_csv, radar_svg, subgroups_csv,
    ReportFormat,
};
pub use subgroup::{subgroup_auroc, subgroup_auroc_predictions, SubgroupRow};
