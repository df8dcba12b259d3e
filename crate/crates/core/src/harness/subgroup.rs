use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::InitMode;
use super::matrix::{CellResult, FoldPrediction};
use crate::dataset::{characteristic_value, Dataset, LabeledPair, Task};
use crate::error::{Error, Result};
use crate::metrics::{auroc, ScoredLabels};
use crate::split::SplitStrategy;

/// Fold-averaged AUROC of the pairs sharing one characteristic value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupRow {
    pub task: Task,
    pub strategy: SplitStrategy,
    pub init: InitMode,
    /// `characteristic=value`, e.g. `HA_subtype=H1`.
    pub subgroup: String,
    pub n_pairs: usize,
    /// Folds in which the subgroup had both classes.
    pub n_folds: usize,
    pub auroc: Option<f64>,
}

/// Per-subgroup mean of per-fold AUROC. Folds where a subgroup has a single
/// class are skipped for that subgroup and noted in `notes`.
///
/// Returns `(subgroup, n_pairs, n_folds, auroc)` sorted by subgroup name.
pub fn subgroup_auroc_predictions(
    dataset: &Dataset,
    task: Task,
    predictions: &[FoldPrediction],
    characteristic: &str,
    notes: &mut Vec<String>,
) -> Result<Vec<(String, usize, usize, Option<f64>)>> {
    let pairs: BTreeMap<String, &LabeledPair> = dataset.task_pairs(task).into_iter().map(|p| (p.pair_id(), p)).collect();
    // subgroup -> (seed, fold) -> (scores, labels)
    let mut groups: BTreeMap<String, BTreeMap<(u64, usize), (Vec<f64>, Vec<bool>)>> = BTreeMap::new();
    let mut sizes: BTreeMap<String, usize> = BTreeMap::new();
    for p in predictions {
        let pair = pairs
            .get(&p.pair_id)
            .ok_or_else(|| Error::Lookup(format!("prediction for unknown {task} pair {}", p.pair_id)))?;
        let value = characteristic_value(dataset, pair, characteristic)
            .ok_or_else(|| Error::Config(format!("unknown characteristic '{characteristic}'")))?;
        let name = format!("{characteristic}={value}");
        let e = groups.entry(name.clone()).or_default().entry((p.seed, p.fold)).or_default();
        e.0.push(p.score);
        e.1.push(p.label);
        *sizes.entry(name).or_default() += 1;
    }
    let mut out = Vec::new();
    for (name, folds) in groups {
        let mut values = Vec::new();
        for ((seed, fold), (scores, labels)) in folds {
            let s = ScoredLabels::new(scores, labels)?;
            match auroc(&s) {
                Ok(v) => values.push(v),
                Err(_) => notes.push(format!("{name}: single class in seed {seed} fold {fold}, skipped")),
            }
        }
        let mean = (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64);
        out.push((name.clone(), sizes[&name], values.len(), mean));
    }
    Ok(out)
}

pub fn subgroup_auroc(dataset: &Dataset, cell: &CellResult, characteristic: &str, notes: &mut Vec<String>) -> Result<Vec<SubgroupRow>> {
    let mut cell_notes = Vec::new();
    let rows = subgroup_auroc_predictions(dataset, cell.task, &cell.predictions, characteristic, &mut cell_notes)?;
    notes.extend(
        cell_notes
            .into_iter()
            .map(|n| format!("{}/{}/{}: {n}", cell.task, cell.strategy, cell.init)),
    );
    Ok(rows
        .into_iter()
        .map(|(subgroup, n_pairs, n_folds, auroc)| SubgroupRow {
            task: cell.task,
            strategy: cell.strategy,
            init: cell.init,
            subgroup,
            n_pairs,
            n_folds,
            auroc,
        })
        .collect())
}
