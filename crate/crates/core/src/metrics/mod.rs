//! Classification metrics, association tests and cross-validation aggregation.

mod classification;
pub mod special;
mod stats;

pub use classification::{auprc, auroc, ScoredLabels};
pub use stats::{
    aggregate_cv, chi_square_independence, mean_and_sample_std, one_sided_paired_t_test, pearson, CvAggregate,
    PearsonResult,
};
