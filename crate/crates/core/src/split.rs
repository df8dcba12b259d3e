//! Stratified k-fold assignment under four leakage regimes.
//!
//! Every pair belongs to a group (itself, its antigen, its antibody or its
//! antibody's cluster) and whole groups are placed into folds. Groups are
//! visited largest first, ties in seeded random order, and each goes to the
//! fold that minimizes the summed deviation of all folds after the
//! hypothetical addition, where a fold deviates by
//!
//! ```text
//! |fold positives − ρ · fold size| + |fold size − N/k|
//! ```
//!
//! with ρ the overall positive rate. Only the receiving fold changes, so the
//! score is that fold's deviation after minus before.
//!
//! Candidate folds are those whose size is at most
//! `min fold size + largest group − group size`. The eligibility rule keeps
//! fold sizes within one largest group of each other (and exactly balanced
//! when every group is a single pair). A final pass swaps pairs of groups
//! between folds while the summed deviation drops and the size bound holds.

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, LabeledPair, Task};
use crate::error::{Error, Result};
use crate::identity::ClusterAssignment;
use crate::rng::SplitMix64;

const SPLIT_STREAM: u64 = 0x5_0117;
const MAX_SWAP_PASSES: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitStrategy {
    Lenient,
    HaExclusive,
    MabExclusive,
    MabClusterExclusive,
}

impl SplitStrategy {
    pub const ALL: [SplitStrategy; 4] = [
        SplitStrategy::Lenient,
        SplitStrategy::HaExclusive,
        SplitStrategy::MabExclusive,
        SplitStrategy::MabClusterExclusive,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SplitStrategy::Lenient => "lenient",
            SplitStrategy::HaExclusive => "ha_exclusive",
            SplitStrategy::MabExclusive => "mab_exclusive",
            SplitStrategy::MabClusterExclusive => "mab_cluster_exclusive",
        }
    }

    /// Whether every antibody is confined to one fold.
    pub fn is_antibody_exclusive(self) -> bool {
        matches!(self, SplitStrategy::MabExclusive | SplitStrategy::MabClusterExclusive)
    }
}

impl fmt::Display for SplitStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SplitStrategy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        SplitStrategy::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| format!("unknown split strategy '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub k: usize,
    pub seed: u64,
    pub strategy: SplitStrategy,
}

impl SplitConfig {
    pub fn new(strategy: SplitStrategy, seed: u64) -> Self {
        Self { k: 5, seed, strategy }
    }
}

/// Fold index of every pair of one task, aligned with [`Dataset::task_pairs`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub task: Task,
    pub strategy: SplitStrategy,
    pub k: usize,
    pub pair_ids: Vec<String>,
    pub folds: Vec<usize>,
}

impl FoldAssignment {
    pub fn validation_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.folds.len()).filter(|&i| self.folds[i] == fold).collect()
    }

    pub fn training_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.folds.len()).filter(|&i| self.folds[i] != fold).collect()
    }

    pub fn fold_of(&self, pair_id: &str) -> Option<usize> {
        self.pair_ids.iter().position(|p| p == pair_id).map(|i| self.folds[i])
    }

    /// `pair_id,fold` CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("pair_id,fold\n");
        for (p, f) in self.pair_ids.iter().zip(&self.folds) {
            let _ = writeln!(out, "{p},{f}");
        }
        out
    }
}

/// Group label of a pair under `strategy`; `None` if a required cluster is missing.
fn group_key(pair: &LabeledPair, strategy: SplitStrategy, clusters: Option<&BTreeMap<&str, usize>>) -> Option<String> {
    Some(match strategy {
        SplitStrategy::Lenient => format!("pair={}", pair.pair_id()),
        SplitStrategy::HaExclusive => format!("antigen={}", pair.antigen_id),
        SplitStrategy::MabExclusive => format!("antibody={}", pair.antibody_id),
        SplitStrategy::MabClusterExclusive => {
            format!("cluster={}", clusters?.get(pair.antibody_id.as_str())?)
        }
    })
}

pub fn make_folds(
    dataset: &Dataset,
    task: Task,
    config: &SplitConfig,
    clusters: Option<&ClusterAssignment>,
) -> Result<FoldAssignment> {
    let k = config.k;
    let strategy = config.strategy;
    if k < 2 {
        return Err(Error::Config(format!("fold count must be at least 2, got {k}")));
    }
    let cluster_index = match (strategy, clusters) {
        (SplitStrategy::MabClusterExclusive, Some(c)) => Some(c.index()),
        (SplitStrategy::MabClusterExclusive, None) => {
            return Err(Error::Config("mab_cluster_exclusive split requires a clustering".into()));
        }
        (_, Some(_)) => {
            return Err(Error::Config(format!("{strategy} split does not take a clustering")));
        }
        (_, None) => None,
    };

    let pairs = dataset.task_pairs(task);
    if pairs.is_empty() {
        return Err(Error::Config(format!("no {task} pairs to split")));
    }

    // Groups in first-appearance order: (pair count, positives, member indices).
    let mut group_of: BTreeMap<String, usize> = BTreeMap::new();
    let mut groups: Vec<(usize, usize, Vec<usize>)> = Vec::new();
    for (i, p) in pairs.iter().enumerate() {
        let key = group_key(p, strategy, cluster_index.as_ref()).ok_or_else(|| {
            Error::Config(format!("antibody '{}' is missing from the clustering", p.antibody_id))
        })?;
        let gi = *group_of.entry(key).or_insert_with(|| {
            groups.push((0, 0, Vec::new()));
            groups.len() - 1
        });
        groups[gi].0 += 1;
        groups[gi].1 += usize::from(p.label);
        groups[gi].2.push(i);
    }
    if groups.len() < k {
        return Err(Error::Infeasible {
            strategy: strategy.to_string(),
            message: format!("{} groups cannot fill {k} folds", groups.len()),
        });
    }

    let mut rng = SplitMix64::derive(config.seed, SPLIT_STREAM);
    let mut order: Vec<usize> = (0..groups.len()).collect();
    rng.shuffle(&mut order);
    order.sort_by(|&a, &b| groups[b].0.cmp(&groups[a].0));

    let n = pairs.len() as f64;
    let total_pos = groups.iter().map(|g| g.1).sum::<usize>() as f64;
    let target_n = n / k as f64;
    let rate = total_pos / n;
    let largest = groups[order[0]].0;

    let deviation = |pos: usize, size: usize| (pos as f64 - rate * size as f64).abs() + (size as f64 - target_n).abs();
    let mut fold_n = vec![0usize; k];
    let mut fold_pos = vec![0usize; k];
    let mut assign = vec![usize::MAX; groups.len()];
    for gi in order {
        let (g_n, g_pos, _) = groups[gi];
        let min_n = *fold_n.iter().min().expect("k >= 2");
        let cap = min_n + largest - g_n;
        let best = (0..k)
            .filter(|&f| fold_n[f] <= cap)
            .min_by(|&a, &b| {
                let score = |f: usize| deviation(fold_pos[f] + g_pos, fold_n[f] + g_n) - deviation(fold_pos[f], fold_n[f]);
                score(a)
                    .partial_cmp(&score(b))
                    .expect("finite scores")
                    .then(fold_n[a].cmp(&fold_n[b]))
                    .then(a.cmp(&b))
            })
            .expect("the smallest fold is always eligible");
        fold_n[best] += g_n;
        fold_pos[best] += g_pos;
        assign[gi] = best;
    }

    // Swap refinement: exchange two groups between folds while that lowers
    // the summed deviation and keeps fold sizes within one largest group.
    for _ in 0..MAX_SWAP_PASSES {
        let mut improved = false;
        for g1 in 0..groups.len() {
            for g2 in g1 + 1..groups.len() {
                let (a, b) = (assign[g1], assign[g2]);
                let ((n1, p1, _), (n2, p2, _)) = (&groups[g1], &groups[g2]);
                if a == b || (n1 == n2 && p1 == p2) {
                    continue;
                }
                let (na, nb) = (fold_n[a] + n2 - n1, fold_n[b] + n1 - n2);
                let (pa, pb) = (fold_pos[a] + p2 - p1, fold_pos[b] + p1 - p2);
                if n1 != n2 {
                    let sizes = (0..k).map(|f| if f == a { na } else if f == b { nb } else { fold_n[f] });
                    let (lo, hi) = sizes.fold((usize::MAX, 0), |(lo, hi), s| (lo.min(s), hi.max(s)));
                    if hi - lo > largest {
                        continue;
                    }
                }
                let delta = deviation(pa, na) + deviation(pb, nb) - deviation(fold_pos[a], fold_n[a]) - deviation(fold_pos[b], fold_n[b]);
                if delta < -1e-9 {
                    fold_n[a] = na;
                    fold_n[b] = nb;
                    fold_pos[a] = pa;
                    fold_pos[b] = pb;
                    assign.swap(g1, g2);
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }

    let mut folds = vec![usize::MAX; pairs.len()];
    for (gi, (_, _, members)) in groups.iter().enumerate() {
        for &m in members {
            folds[m] = assign[gi];
        }
    }

    Ok(FoldAssignment {
        task,
        strategy,
        k,
        pair_ids: pairs.iter().map(|p| p.pair_id()).collect(),
        folds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub group: String,
    pub folds: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldStats {
    pub fold: usize,
    pub size: usize,
    pub positives: usize,
    pub positivity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub task: Task,
    pub strategy: SplitStrategy,
    /// Pairs missing from the assignment or listed that are not in the dataset.
    pub coverage_errors: Vec<String>,
    pub violations: Vec<Violation>,
    pub folds: Vec<FoldStats>,
    pub positivity_min: f64,
    pub positivity_max: f64,
    pub positivity_spread: f64,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty() && self.coverage_errors.is_empty()
    }
}

/// Checks coverage and exclusivity of `assignment` under `strategy`.
pub fn validate_folds(
    dataset: &Dataset,
    assignment: &FoldAssignment,
    strategy: SplitStrategy,
    clusters: Option<&ClusterAssignment>,
) -> ValidationReport {
    let pairs = dataset.task_pairs(assignment.task);
    let by_id: BTreeMap<String, usize> = assignment
        .pair_ids
        .iter()
        .zip(&assignment.folds)
        .map(|(p, &f)| (p.clone(), f))
        .collect();

    let mut coverage_errors = Vec::new();
    if by_id.len() != assignment.pair_ids.len() {
        coverage_errors.push("assignment lists a pair more than once".to_string());
    }
    let known: std::collections::BTreeSet<String> = pairs.iter().map(|p| p.pair_id()).collect();
    for id in by_id.keys().filter(|id| !known.contains(*id)) {
        coverage_errors.push(format!("unknown pair {id}"));
    }

    let cluster_index = clusters.map(|c| c.index());
    let mut group_folds: BTreeMap<String, std::collections::BTreeSet<usize>> = BTreeMap::new();
    let mut size = vec![0usize; assignment.k];
    let mut pos = vec![0usize; assignment.k];
    for p in &pairs {
        let id = p.pair_id();
        let Some(&fold) = by_id.get(&id) else {
            coverage_errors.push(format!("pair {id} has no fold"));
            continue;
        };
        if fold >= assignment.k {
            coverage_errors.push(format!("pair {id} has fold {fold} outside [0, {})", assignment.k));
            continue;
        }
        size[fold] += 1;
        pos[fold] += usize::from(p.label);
        let key = match strategy {
            SplitStrategy::Lenient => continue,
            SplitStrategy::MabClusterExclusive => match group_key(p, strategy, cluster_index.as_ref()) {
                Some(k) => k,
                None => {
                    coverage_errors.push(format!("antibody '{}' is missing from the clustering", p.antibody_id));
                    continue;
                }
            },
            _ => group_key(p, strategy, None).expect("non-cluster key"),
        };
        group_folds.entry(key).or_default().insert(fold);
    }

    let violations = group_folds
        .into_iter()
        .filter(|(_, f)| f.len() > 1)
        .map(|(group, f)| Violation {
            group,
            folds: f.into_iter().collect(),
        })
        .collect();
    let folds: Vec<FoldStats> = (0..assignment.k)
        .map(|f| FoldStats {
            fold: f,
            size: size[f],
            positives: pos[f],
            positivity: if size[f] == 0 { 0.0 } else { pos[f] as f64 / size[f] as f64 },
        })
        .collect();
    let positivity_min = folds.iter().map(|f| f.positivity).fold(f64::INFINITY, f64::min);
    let positivity_max = folds.iter().map(|f| f.positivity).fold(f64::NEG_INFINITY, f64::max);
    ValidationReport {
        task: assignment.task,
        strategy,
        coverage_errors,
        violations,
        folds,
        positivity_min,
        positivity_max,
        positivity_spread: positivity_max - positivity_min,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::*;

    fn seq(s: &str) -> AminoAcidSequence {
        AminoAcidSequence::new(s).unwrap()
    }

    /// `n_ab` antibodies × `n_ag` antigens, positive when (i + j) % 3 == 0.
    fn grid(n_ab: usize, n_ag: usize) -> Dataset {
        let abs = (0..n_ab)
            .map(|i| Antibody {
                id: format!("ab{i}"),
                heavy_var: seq("ACDEFGHIK"),
                light_var: seq("LMNPQRST"),
                host: Host::Human,
                lc_isotype: LightIsotype::Kappa,
                hc_isotype: HeavyIsotype::IgG,
                epitope: Epitope::Conformational,
            })
            .collect();
        let ags = (0..n_ag)
            .map(|j| Antigen {
                id: format!("ag{j}"),
                sequence: seq("MKAILVVLLYTFA"),
                subtype: Subtype::H1,
                year_category: YearCategory::Post2010,
                origin: Origin::Public,
            })
            .collect();
        let mut recs = Vec::new();
        for i in 0..n_ab {
            for j in 0..n_ag {
                recs.push(AssayRecord {
                    antibody_id: format!("ab{i}"),
                    antigen_id: format!("ag{j}"),
                    assay: Task::Binding,
                    raw_value: if (i + j) % 3 == 0 { 5.0 } else { 0.6 },
                });
            }
        }
        Dataset::new(abs, ags, recs).unwrap()
    }

    #[test]
    fn lenient_is_exactly_balanced() {
        let d = grid(10, 10);
        let a = make_folds(&d, Task::Binding, &SplitConfig::new(SplitStrategy::Lenient, 1), None).unwrap();
        let r = validate_folds(&d, &a, SplitStrategy::Lenient, None);
        assert!(r.passed());
        assert!(r.folds.iter().all(|f| f.size == 20), "{:?}", r.folds);
    }

    #[test]
    fn too_few_groups_is_infeasible() {
        let d = grid(3, 10);
        let err = make_folds(&d, Task::Binding, &SplitConfig::new(SplitStrategy::MabExclusive, 1), None).unwrap_err();
        assert!(matches!(err, Error::Infeasible { ref strategy, .. } if strategy == "mab_exclusive"));
    }

    #[test]
    fn corrupted_assignment_names_the_antibody() {
        let d = grid(10, 6);
        let mut a = make_folds(&d, Task::Binding, &SplitConfig::new(SplitStrategy::MabExclusive, 3), None).unwrap();
        assert!(validate_folds(&d, &a, SplitStrategy::MabExclusive, None).passed());
        let i = a.pair_ids.iter().position(|p| p == "ab4:ag2").unwrap();
        a.folds[i] = (a.folds[i] + 1) % a.k;
        let r = validate_folds(&d, &a, SplitStrategy::MabExclusive, None);
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].group, "antibody=ab4");
    }

    #[test]
    fn exclusivity_and_determinism_for_all_strategies() {
        let d = grid(12, 9);
        let clusters = ClusterAssignment {
            clusters: (0..6)
                .map(|c| crate::identity::Cluster {
                    representative_id: format!("ab{}", 2 * c),
                    member_ids: vec![format!("ab{}", 2 * c), format!("ab{}", 2 * c + 1)],
                })
                .collect(),
        };
        for strategy in SplitStrategy::ALL {
            let cl = (strategy == SplitStrategy::MabClusterExclusive).then_some(&clusters);
            let cfg = SplitConfig::new(strategy, 9);
            let a = make_folds(&d, Task::Binding, &cfg, cl).unwrap();
            assert_eq!(a, make_folds(&d, Task::Binding, &cfg, cl).unwrap());
            let r = validate_folds(&d, &a, strategy, cl);
            assert!(r.passed(), "{strategy}: {:?}", r.violations);
            assert_eq!(r.folds.iter().map(|f| f.size).sum::<usize>(), 108);
            let sizes: Vec<usize> = r.folds.iter().map(|f| f.size).collect();
            let largest = match strategy {
                SplitStrategy::Lenient => 1,
                SplitStrategy::HaExclusive => 12,
                SplitStrategy::MabExclusive => 9,
                SplitStrategy::MabClusterExclusive => 18,
            };
            assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= largest);
        }
    }

    #[test]
    fn cluster_strategy_requires_clusters() {
        let d = grid(10, 3);
        let cfg = SplitConfig::new(SplitStrategy::MabClusterExclusive, 0);
        assert!(matches!(make_folds(&d, Task::Binding, &cfg, None), Err(Error::Config(_))));
        let cfg = SplitConfig { k: 1, ..SplitConfig::new(SplitStrategy::Lenient, 0) };
        assert!(make_folds(&d, Task::Binding, &cfg, None).is_err());
    }

    #[test]
    fn strategy_names() {
        for s in SplitStrategy::ALL {
            assert_eq!(s.as_str().parse::<SplitStrategy>().unwrap(), s);
        }
    }
}
