use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::align::{identity_bytes, AlignParams, SEPARATOR};
use crate::dataset::Antibody;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub min_identity: f64,
    pub align: AlignParams,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            min_identity: 0.5,
            align: AlignParams::default(),
        }
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_identity > 0.0 && self.min_identity <= 1.0) {
            return Err(Error::Config(format!("min_identity {} not in (0, 1]", self.min_identity)));
        }
        self.align.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cluster {
    pub representative_id: String,
    /// Members in assignment order; the representative comes first.
    pub member_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub clusters: Vec<Cluster>,
}

impl ClusterAssignment {
    /// Member id → index of its cluster.
    pub fn index(&self) -> BTreeMap<&str, usize> {
        self.clusters
            .iter()
            .enumerate()
            .flat_map(|(ci, c)| c.member_ids.iter().map(move |m| (m.as_str(), ci)))
            .collect()
    }

    pub fn representative_of(&self, id: &str) -> Option<&str> {
        self.clusters
            .iter()
            .find(|c| c.member_ids.iter().any(|m| m == id))
            .map(|c| c.representative_id.as_str())
    }

    pub fn n_members(&self) -> usize {
        self.clusters.iter().map(|c| c.member_ids.len()).sum()
    }

    /// `member_id<TAB>representative_id`, one line per member, clusters in order.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for c in &self.clusters {
            for m in &c.member_ids {
                let _ = writeln!(out, "{m}\t{}", c.representative_id);
            }
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut clusters: Vec<Cluster> = Vec::new();
        let mut by_rep: BTreeMap<String, usize> = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let (member, rep) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse("clusters.tsv", i + 1, "expected member_id<TAB>representative_id"))?;
            let idx = *by_rep.entry(rep.to_string()).or_insert_with(|| {
                clusters.push(Cluster {
                    representative_id: rep.to_string(),
                    member_ids: Vec::new(),
                });
                clusters.len() - 1
            });
            clusters[idx].member_ids.push(member.to_string());
        }
        for c in &clusters {
            if !c.member_ids.contains(&c.representative_id) {
                return Err(Error::Integrity(format!(
                    "representative '{}' is not a member of its own cluster",
                    c.representative_id
                )));
            }
        }
        Ok(Self { clusters })
    }
}

/// Heavy chain, separator, light chain.
pub fn clustering_sequence(ab: &Antibody) -> Vec<u8> {
    let mut s = Vec::with_capacity(ab.heavy_var.len() + ab.light_var.len() + 1);
    s.extend_from_slice(ab.heavy_var.as_bytes());
    s.push(SEPARATOR);
    s.extend_from_slice(ab.light_var.as_bytes());
    s
}

/// Greedy incremental clustering of `(id, sequence)` items.
///
/// Items are visited by descending length, ties by id. Each joins the first
/// cluster (in creation order) whose representative it matches at
/// `min_identity` or above, otherwise it founds a new cluster.
pub fn greedy_cluster_sequences(items: &[(String, Vec<u8>)], config: &ClusterConfig) -> Result<ClusterAssignment> {
    config.validate()?;
    if items.is_empty() {
        return Err(Error::Config("clustering needs at least one sequence".into()));
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&a, &b| items[b].1.len().cmp(&items[a].1.len()).then_with(|| items[a].0.cmp(&items[b].0)));

    let mut reps: Vec<usize> = Vec::new();
    let mut clusters: Vec<Cluster> = Vec::new();
    for idx in order {
        let seq = &items[idx].1;
        let hit = reps
            .par_iter()
            .position_first(|&r| identity_bytes(seq, &items[r].1, &config.align) >= config.min_identity);
        match hit {
            Some(ci) => clusters[ci].member_ids.push(items[idx].0.clone()),
            None => {
                reps.push(idx);
                clusters.push(Cluster {
                    representative_id: items[idx].0.clone(),
                    member_ids: vec![items[idx].0.clone()],
                });
            }
        }
    }
    Ok(ClusterAssignment { clusters })
}

pub fn greedy_cluster<'a>(
    antibodies: impl IntoIterator<Item = &'a Antibody>,
    config: &ClusterConfig,
) -> Result<ClusterAssignment> {
    let items: Vec<(String, Vec<u8>)> = antibodies
        .into_iter()
        .map(|ab| (ab.id.clone(), clustering_sequence(ab)))
        .collect();
    greedy_cluster_sequences(&items, config)
}
