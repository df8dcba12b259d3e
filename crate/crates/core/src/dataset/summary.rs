//! Per-characteristic positivity tables with chi-square association tests.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::types::*;
use crate::error::{Error, Result};
use crate::metrics::{chi_square_independence, mean_and_sample_std};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryRow {
    pub value: String,
    pub count: usize,
    pub fraction: f64,
    pub positives: usize,
    pub positive_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicSummary {
    pub name: String,
    pub categories: Vec<CategoryRow>,
    /// Absent when the contingency table is degenerate (fewer than two
    /// observed categories, or a class with no members).
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub task: Task,
    pub n_pairs: usize,
    pub positives: usize,
    pub positivity: f64,
    pub assays_per_antibody: MeanStd,
    pub assays_per_antigen: MeanStd,
    pub characteristics: Vec<CharacteristicSummary>,
}

/// Characteristic names, matching the subgroup naming used elsewhere.
pub const CHARACTERISTICS: [&str; 6] = ["host", "year_category", "HA_subtype", "lc_isotype", "hc_isotype", "epitope"];

/// Category of `pair` under a named characteristic.
pub fn characteristic_value(dataset: &Dataset, pair: &LabeledPair, name: &str) -> Option<&'static str> {
    let ab = dataset.antibody(&pair.antibody_id)?;
    let ag = dataset.antigen(&pair.antigen_id)?;
    Some(match name {
        "host" => ab.host.as_str(),
        "year_category" => ag.year_category.as_str(),
        "HA_subtype" => ag.subtype.as_str(),
        "lc_isotype" => ab.lc_isotype.as_str(),
        "hc_isotype" => ab.hc_isotype.as_str(),
        "epitope" => ab.epitope.as_str(),
        "origin" => ag.origin.as_str(),
        _ => return None,
    })
}

pub fn summarize(dataset: &Dataset, task: Task) -> Result<SummaryTable> {
    let pairs = dataset.task_pairs(task);
    if pairs.is_empty() {
        return Err(Error::Config(format!("dataset has no {task} pairs")));
    }
    let n = pairs.len();
    let positives = pairs.iter().filter(|p| p.label).count();

    let mut per_ab: BTreeMap<&str, usize> = BTreeMap::new();
    let mut per_ag: BTreeMap<&str, usize> = BTreeMap::new();
    for p in &pairs {
        *per_ab.entry(p.antibody_id.as_str()).or_default() += 1;
        *per_ag.entry(p.antigen_id.as_str()).or_default() += 1;
    }
    let mean_std = |counts: &BTreeMap<&str, usize>| {
        let v: Vec<f64> = counts.values().map(|&c| c as f64).collect();
        let (mean, std) = mean_and_sample_std(&v);
        MeanStd { mean, std: if std.is_nan() { 0.0 } else { std } }
    };

    let characteristics = CHARACTERISTICS
        .iter()
        .map(|&name| {
            let mut tally: BTreeMap<&'static str, (usize, usize)> = BTreeMap::new();
            for p in &pairs {
                let v = characteristic_value(dataset, p, name).expect("pairs reference known entities");
                let e = tally.entry(v).or_default();
                e.0 += 1;
                e.1 += usize::from(p.label);
            }
            let categories: Vec<CategoryRow> = tally
                .iter()
                .map(|(&value, &(count, pos))| CategoryRow {
                    value: value.to_string(),
                    count,
                    fraction: count as f64 / n as f64,
                    positives: pos,
                    positive_rate: pos as f64 / count as f64,
                })
                .collect();
            let table: Vec<[f64; 2]> = tally
                .values()
                .map(|&(count, pos)| [pos as f64, (count - pos) as f64])
                .collect();
            let p_value = if table.len() < 2 {
                None
            } else {
                chi_square_independence(&table).ok()
            };
            CharacteristicSummary {
                name: name.to_string(),
                categories,
                p_value,
            }
        })
        .collect();

    Ok(SummaryTable {
        task,
        n_pairs: n,
        positives,
        positivity: positives as f64 / n as f64,
        assays_per_antibody: mean_std(&per_ab),
        assays_per_antigen: mean_std(&per_ag),
        characteristics,
    })
}

impl SummaryTable {
    /// CSV with one row per (characteristic, category); the p-value repeats
    /// on each row of its characteristic and is empty when absent.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("task,characteristic,category,n_pairs,fraction,positives,positive_rate,p_value\n");
        for c in &self.characteristics {
            let p = c.p_value.map(|p| format!("{p}")).unwrap_or_default();
            for row in &c.categories {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{}",
                    self.task, c.name, row.value, row.count, row.fraction, row.positives, row.positive_rate, p
                );
            }
        }
        let _ = writeln!(
            out,
            "{},overall,all,{},1,{},{},",
            self.task, self.n_pairs, self.positives, self.positivity
        );
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(s: &str) -> AminoAcidSequence {
        AminoAcidSequence::new(s).unwrap()
    }

    fn ab(id: &str, host: Host) -> Antibody {
        Antibody {
            id: id.into(),
            heavy_var: seq("ACDE"),
            light_var: seq("FGHI"),
            host,
            lc_isotype: LightIsotype::Kappa,
            hc_isotype: HeavyIsotype::IgG,
            epitope: Epitope::Conformational,
        }
    }

    fn ag(id: &str) -> Antigen {
        Antigen {
            id: id.into(),
            sequence: seq("MKAIL"),
            subtype: Subtype::H1,
            year_category: YearCategory::Post2010,
            origin: Origin::Public,
        }
    }

    fn rec(a: &str, g: &str, v: f64) -> AssayRecord {
        AssayRecord {
            antibody_id: a.into(),
            antigen_id: g.into(),
            assay: Task::Binding,
            raw_value: v,
        }
    }

    #[test]
    fn identical_rates_give_p_one_and_degenerate_groups_absent() {
        // Two hosts, each 1 positive of 2: chi-square statistic 0.
        let d = Dataset::new(
            vec![ab("a1", Host::Human), ab("a2", Host::Mouse)],
            vec![ag("g1"), ag("g2")],
            vec![rec("a1", "g1", 5.0), rec("a1", "g2", 0.6), rec("a2", "g1", 5.0), rec("a2", "g2", 0.6)],
        )
        .unwrap();
        let s = summarize(&d, Task::Binding).unwrap();
        assert_eq!(s.positivity, 0.5);
        let host = s.characteristics.iter().find(|c| c.name == "host").unwrap();
        assert!((host.p_value.unwrap() - 1.0).abs() < 1e-12);
        let subtype = s.characteristics.iter().find(|c| c.name == "HA_subtype").unwrap();
        assert_eq!(subtype.categories.len(), 1);
        assert_eq!(subtype.categories[0].fraction, 1.0);
        assert_eq!(subtype.p_value, None);
        for c in &s.characteristics {
            assert_eq!(c.categories.iter().map(|r| r.count).sum::<usize>(), s.n_pairs);
        }
        assert_eq!(s.assays_per_antibody.mean, 2.0);
        assert_eq!(s.assays_per_antibody.std, 0.0);
        assert!(s.to_csv().lines().count() > 6);
    }

    #[test]
    fn empty_task_is_error() {
        let d = Dataset::new(vec![ab("a1", Host::Human)], vec![ag("g1")], vec![rec("a1", "g1", 2.0)]).unwrap();
        assert!(summarize(&d, Task::Hai).is_err());
    }
}
