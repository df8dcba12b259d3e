//! Assay value thresholds.
//!
//! AUC-ELISA values above 1 are positive binding; HAI concentrations below
//! 10 µg/mL are positive inhibition. Both comparisons are strict.

use super::Task;
use crate::error::{Error, Result};

pub const ELISA_RANGE: (f64, f64) = (0.5, 20.0);
pub const ELISA_THRESHOLD: f64 = 1.0;
pub const HAI_RANGE: (f64, f64) = (0.005, 20.0);
pub const HAI_THRESHOLD: f64 = 10.0;

fn check_range(assay: &'static str, value: f64, (min, max): (f64, f64)) -> Result<()> {
    if value.is_finite() && (min..=max).contains(&value) {
        Ok(())
    } else {
        Err(Error::Domain { assay, value, min, max })
    }
}

pub fn binarize_elisa(auc_value: f64) -> Result<bool> {
    check_range("ELISA", auc_value, ELISA_RANGE)?;
    Ok(auc_value > ELISA_THRESHOLD)
}

pub fn binarize_hai(concentration: f64) -> Result<bool> {
    check_range("HAI", concentration, HAI_RANGE)?;
    Ok(concentration < HAI_THRESHOLD)
}

pub fn binarize(task: Task, raw_value: f64) -> Result<bool> {
    match task {
        Task::Binding => binarize_elisa(raw_value),
        Task::Hai => binarize_hai(raw_value),
    }
}
