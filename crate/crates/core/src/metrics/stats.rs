use serde::{Deserialize, Serialize};

use super::special::{chi_square_sf, student_t_sf};
use crate::error::{Error, Result};

/// Cross-validation summary: mean, sample standard deviation across folds,
/// and standard error `std / √k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvAggregate {
    pub mean: f64,
    pub std: f64,
    pub se: f64,
}

impl CvAggregate {
    /// Two-decimal mean with the spread at its first significant digit,
    /// e.g. `0.92 ± 0.004`.
    pub fn display(&self) -> String {
        format!("{:.2} ± {}", self.mean, format_spread(self.std))
    }
}

fn format_spread(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x:.3}");
    }
    let digits = (-x.abs().log10().floor()).max(0.0) as usize;
    format!("{:.*}", digits.max(2), x)
}

/// Mean and sample (n − 1) standard deviation; std is NaN for one value.
pub fn mean_and_sample_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

pub fn aggregate_cv(per_fold: &[f64]) -> Result<CvAggregate> {
    if per_fold.len() < 2 {
        return Err(Error::Config(format!(
            "cross-validation aggregate needs at least 2 folds, got {}",
            per_fold.len()
        )));
    }
    let (mean, std) = mean_and_sample_std(per_fold);
    Ok(CvAggregate {
        mean,
        std,
        se: std / (per_fold.len() as f64).sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PearsonResult {
    pub r: f64,
    /// Two-sided p-value from Student-t with n − 2 degrees of freedom.
    pub p: f64,
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<PearsonResult> {
    if x.len() != y.len() {
        return Err(Error::UndefinedMetric(format!("pearson: lengths {} and {}", x.len(), y.len())));
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::UndefinedMetric(format!("pearson needs at least 3 points, got {n}")));
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedMetric("pearson: constant input vector".into()));
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    let p = if 1.0 - r * r <= 1e-15 {
        0.0
    } else {
        let t = r * (df / (1.0 - r * r)).sqrt();
        (2.0 * student_t_sf(t.abs(), df)).min(1.0)
    };
    Ok(PearsonResult { r, p })
}

/// Paired t-test on `a − b`, one-sided for the alternative mean(a − b) > 0.
///
/// Zero-variance differences give p = 0, 1 or 0.5 for a positive, negative
/// or zero mean difference.
pub fn one_sided_paired_t_test(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::UndefinedMetric(format!(
            "paired t-test needs two equal-length samples of at least 2, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let (mean, sd) = mean_and_sample_std(&diffs);
    if sd == 0.0 {
        return Ok(match mean.partial_cmp(&0.0) {
            Some(std::cmp::Ordering::Greater) => 0.0,
            Some(std::cmp::Ordering::Less) => 1.0,
            _ => 0.5,
        });
    }
    let n = diffs.len() as f64;
    let t = mean / (sd / n.sqrt());
    Ok(student_t_sf(t, n - 1.0))
}

/// Pearson chi-square test of independence on an r × c table of counts;
/// degrees of freedom (r − 1)(c − 1).
pub fn chi_square_independence<R: AsRef<[f64]>>(table: &[R]) -> Result<f64> {
    let rows = table.len();
    let cols = table.first().map(|r| r.as_ref().len()).unwrap_or(0);
    if rows < 2 || cols < 2 {
        return Err(Error::UndefinedMetric(format!("chi-square needs at least a 2×2 table, got {rows}×{cols}")));
    }
    if table.iter().any(|r| r.as_ref().len() != cols) {
        return Err(Error::UndefinedMetric("chi-square table is ragged".into()));
    }
    let row_tot: Vec<f64> = table.iter().map(|r| r.as_ref().iter().sum()).collect();
    let col_tot: Vec<f64> = (0..cols).map(|j| table.iter().map(|r| r.as_ref()[j]).sum()).collect();
    let total: f64 = row_tot.iter().sum();
    if row_tot.iter().chain(&col_tot).any(|&m| m <= 0.0) {
        return Err(Error::UndefinedMetric("chi-square table has a zero marginal".into()));
    }
    let mut stat = 0.0;
    for (i, r) in table.iter().enumerate() {
        for (j, &obs) in r.as_ref().iter().enumerate() {
            let expected = row_tot[i] * col_tot[j] / total;
            stat += (obs - expected).powi(2) / expected;
        }
    }
    let df = ((rows - 1) * (cols - 1)) as f64;
    Ok(chi_square_sf(stat, df))
}
