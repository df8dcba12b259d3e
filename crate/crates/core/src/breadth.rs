//! Per-antibody breadth: share of positive assays against one HA subtype,
//! compared with the mean validation prediction across the same pairs.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Subtype, Task};
use crate::error::{Error, Result};
use crate::metrics::{auroc, pearson, ScoredLabels};
use crate::split::SplitStrategy;

pub const MIN_ASSAYS: usize = 5;
pub const BROAD_THRESHOLD: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreadthRecord {
    pub antibody_id: String,
    pub subtype: Subtype,
    pub n_assays: usize,
    pub positive_rate: f64,
    pub mean_prediction: f64,
}

/// Aggregates validation predictions (keyed by pair id) into one record per
/// antibody with at least `min_assays` pairs against `subtype`.
///
/// Only antibody-exclusive strategies are accepted, so every antibody's
/// predictions come from models that never saw it.
pub fn compute_breadth(
    dataset: &Dataset,
    predictions: &BTreeMap<String, f64>,
    task: Task,
    strategy: SplitStrategy,
    subtype: Subtype,
    min_assays: usize,
) -> Result<Vec<BreadthRecord>> {
    if !strategy.is_antibody_exclusive() {
        return Err(Error::Protocol(format!(
            "breadth needs predictions from an antibody-exclusive split, got {strategy}"
        )));
    }
    if !matches!(subtype, Subtype::H1 | Subtype::H3) {
        return Err(Error::Config(format!("breadth is defined for H1 and H3 only, got {subtype}")));
    }
    // (positives, n, score sum) per antibody.
    let mut acc: BTreeMap<&str, (usize, usize, f64)> = BTreeMap::new();
    for pair in dataset.task_pairs(task) {
        let id = pair.pair_id();
        let score = *predictions
            .get(&id)
            .ok_or_else(|| Error::Protocol(format!("no validation prediction for pair {id}")))?;
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::Config(format!("prediction {score} for pair {id} is outside [0, 1]")));
        }
        let ag = dataset.antigen(&pair.antigen_id).ok_or_else(|| Error::Lookup(pair.antigen_id.clone()))?;
        if ag.subtype != subtype {
            continue;
        }
        let e = acc.entry(pair.antibody_id.as_str()).or_default();
        e.0 += pair.label as usize;
        e.1 += 1;
        e.2 += score;
    }
    Ok(acc
        .into_iter()
        .filter(|(_, (_, n, _))| *n >= min_assays)
        .map(|(id, (pos, n, sum))| BreadthRecord {
            antibody_id: id.to_string(),
            subtype,
            n_assays: n,
            positive_rate: pos as f64 / n as f64,
            mean_prediction: sum / n as f64,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BreadthMetrics {
    pub n_antibodies: usize,
    pub pearson_r: f64,
    pub pearson_p: f64,
    /// Share of antibodies labeled broad.
    pub broad_rate: f64,
    /// `None` when only one breadth class is present.
    pub auroc: Option<f64>,
}

/// Pearson correlation of mean prediction with positive rate, and AUROC of
/// mean prediction against `positive_rate > broad_threshold`.
pub fn breadth_metrics(records: &[BreadthRecord], broad_threshold: f64) -> Result<BreadthMetrics> {
    if records.len() < 3 {
        return Err(Error::UndefinedMetric(format!(
            "breadth metrics need at least 3 antibodies, got {}",
            records.len()
        )));
    }
    let preds: Vec<f64> = records.iter().map(|r| r.mean_prediction).collect();
    let rates: Vec<f64> = records.iter().map(|r| r.positive_rate).collect();
    let p = pearson(&preds, &rates)?;
    let broad: Vec<bool> = rates.iter().map(|&r| r > broad_threshold).collect();
    let n_broad = broad.iter().filter(|&&b| b).count();
    let auc = if n_broad == 0 || n_broad == broad.len() {
        log::warn!("all {} antibodies fall in one breadth class; AUROC omitted", broad.len());
        None
    } else {
        Some(auroc(&ScoredLabels::new(preds, broad)?)?)
    };
    Ok(BreadthMetrics {
        n_antibodies: records.len(),
        pearson_r: p.r,
        pearson_p: p.p,
        broad_rate: n_broad as f64 / records.len() as f64,
        auroc: auc,
    })
}

/// One row of the breadth table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreadthRow {
    pub task: Task,
    pub subtype: Subtype,
    pub split: SplitStrategy,
    pub metrics: BreadthMetrics,
}

pub fn breadth_table_csv(rows: &[BreadthRow]) -> String {
    let mut out = String::from("task,subtype,split,n_antibodies,pearson,p_value,broad_rate,auroc\n");
    for r in rows {
        let m = &r.metrics;
        let auc = m.auroc.map(|a| format!("{a:.4}")).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{:.4},{:.3e},{:.4},{}",
            r.task, r.subtype, r.split, m.n_antibodies, m.pearson_r, m.pearson_p, m.broad_rate, auc
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{
        AminoAcidSequence, Antibody, Antigen, AssayRecord, Epitope, HeavyIsotype, Host, LightIsotype, Origin,
        YearCategory,
    };

    fn antibody(id: &str) -> Antibody {
        Antibody {
            id: id.into(),
            heavy_var: AminoAcidSequence::new("ACDEFGHIK").unwrap(),
            light_var: AminoAcidSequence::new("LMNPQRST").unwrap(),
            host: Host::Human,
            lc_isotype: LightIsotype::Kappa,
            hc_isotype: HeavyIsotype::IgG,
            epitope: Epitope::OtherUnknown,
        }
    }

    fn antigen(id: &str, subtype: Subtype) -> Antigen {
        Antigen {
            id: id.into(),
            sequence: AminoAcidSequence::new("VWYACDEF").unwrap(),
            subtype,
            year_category: YearCategory::Post2010,
            origin: Origin::Public,
        }
    }

    /// ab0 sees 4 H1 antigens, ab1 sees 6 H1 (all positive) and 1 H3.
    fn fixture() -> (Dataset, BTreeMap<String, f64>) {
        let ags: Vec<Antigen> = (0..6)
            .map(|i| antigen(&format!("h1_{i}"), Subtype::H1))
            .chain([antigen("h3_0", Subtype::H3)])
            .collect();
        let mut recs = Vec::new();
        let mut preds = BTreeMap::new();
        for i in 0..4 {
            recs.push(AssayRecord { antibody_id: "ab0".into(), antigen_id: format!("h1_{i}"), assay: Task::Binding, raw_value: 0.7 });
            preds.insert(format!("ab0:h1_{i}"), 0.1);
        }
        for (i, ag) in ags.iter().enumerate() {
            recs.push(AssayRecord { antibody_id: "ab1".into(), antigen_id: ag.id.clone(), assay: Task::Binding, raw_value: 5.0 });
            preds.insert(format!("ab1:{}", ag.id), 0.1 * i as f64);
        }
        (Dataset::new(vec![antibody("ab0"), antibody("ab1")], ags, recs).unwrap(), preds)
    }

    #[test]
    fn filtering_and_aggregation() {
        let (ds, preds) = fixture();
        let recs = compute_breadth(&ds, &preds, Task::Binding, SplitStrategy::MabExclusive, Subtype::H1, MIN_ASSAYS).unwrap();
        assert_eq!(recs.len(), 1);
        let r = &recs[0];
        assert_eq!((r.antibody_id.as_str(), r.n_assays, r.positive_rate), ("ab1", 6, 1.0));
        assert!((r.mean_prediction - 0.25).abs() < 1e-15);
        let h3 = compute_breadth(&ds, &preds, Task::Binding, SplitStrategy::MabClusterExclusive, Subtype::H3, 1).unwrap();
        assert_eq!(h3.len(), 1);
        assert_eq!(h3[0].n_assays, 1);
    }

    #[test]
    fn protocol_errors() {
        let (ds, mut preds) = fixture();
        for s in [SplitStrategy::Lenient, SplitStrategy::HaExclusive] {
            assert!(matches!(
                compute_breadth(&ds, &preds, Task::Binding, s, Subtype::H1, 5),
                Err(Error::Protocol(_))
            ));
        }
        preds.remove("ab0:h1_0");
        assert!(compute_breadth(&ds, &preds, Task::Binding, SplitStrategy::MabExclusive, Subtype::H1, 5).is_err());
        let (ds, preds) = fixture();
        assert!(compute_breadth(&ds, &preds, Task::Binding, SplitStrategy::MabExclusive, Subtype::H5, 5).is_err());
    }

    fn rec(rate: f64, pred: f64) -> BreadthRecord {
        BreadthRecord { antibody_id: "x".into(), subtype: Subtype::H1, n_assays: 10, positive_rate: rate, mean_prediction: pred }
    }

    #[test]
    fn metrics_examples() {
        let perfect: Vec<_> = [0.0, 0.2, 0.3, 0.5, 0.9].iter().map(|&r| rec(r, r)).collect();
        let m = breadth_metrics(&perfect, BROAD_THRESHOLD).unwrap();
        assert!((m.pearson_r - 1.0).abs() < 1e-12);
        assert_eq!(m.auroc, Some(1.0));
        // 0.3 is not broad.
        assert!((m.broad_rate - 0.4).abs() < 1e-15);
        let constant: Vec<_> = [0.0, 0.2, 0.5].iter().map(|&r| rec(r, 0.5)).collect();
        assert!(matches!(breadth_metrics(&constant, 0.3), Err(Error::UndefinedMetric(_))));
        let one_class: Vec<_> = [0.4, 0.6, 0.9].iter().map(|&r| rec(r, r / 2.0)).collect();
        assert_eq!(breadth_metrics(&one_class, 0.3).unwrap().auroc, None);
        assert!(breadth_metrics(&perfect[..2], 0.3).is_err());
    }

    #[test]
    fn csv_header() {
        let m = BreadthMetrics { n_antibodies: 3, pearson_r: 0.5, pearson_p: 0.01, broad_rate: 0.25, auroc: None };
        let csv = breadth_table_csv(&[BreadthRow { task: Task::Hai, subtype: Subtype::H3, split: SplitStrategy::MabExclusive, metrics: m }]);
        assert_eq!(csv.lines().next().unwrap(), "task,subtype,split,n_antibodies,pearson,p_value,broad_rate,auroc");
        assert_eq!(csv.lines().nth(1).unwrap(), "hai,H3,mab_exclusive,3,0.5000,1.000e-2,0.2500,");
    }
}
