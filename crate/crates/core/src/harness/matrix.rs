use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ExperimentSpec, InitMode};
use super::subgroup::{subgroup_auroc, SubgroupRow};
use crate::breadth::{breadth_metrics, compute_breadth, BreadthRow, BROAD_THRESHOLD, MIN_ASSAYS};
use crate::dataset::{Dataset, Subtype, Task, CHARACTERISTICS};
use crate::error::{Error, Result};
use crate::identity::{greedy_cluster, ClusterAssignment, ClusterConfig};
use crate::metrics::{aggregate_cv, auprc, auroc, one_sided_paired_t_test, CvAggregate, ScoredLabels};
use crate::model::{pretrain_mlm, train, Init, ModelParams, PairPrompt};
use crate::split::{make_folds, FoldAssignment, SplitConfig, SplitStrategy};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Validation score of one pair in one (seed, fold).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPrediction {
    pub seed: u64,
    pub fold: usize,
    pub pair_id: String,
    pub label: bool,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub seed: u64,
    pub fold: usize,
    pub n_train: usize,
    pub n_validation: usize,
    pub validation_positivity: f64,
    /// `None` when the validation fold has a single class.
    pub auroc: Option<f64>,
    pub auprc: Option<f64>,
    pub final_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    Failed { cause: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub task: Task,
    pub strategy: SplitStrategy,
    pub init: InitMode,
    pub status: CellStatus,
    pub folds: Vec<FoldResult>,
    /// Aggregate over every (seed, fold) with a defined metric.
    pub auroc: Option<CvAggregate>,
    pub auprc: Option<CvAggregate>,
    pub predictions: Vec<FoldPrediction>,
}

impl CellResult {
    pub fn spec(&self) -> ExperimentSpec {
        ExperimentSpec {
            task: self.task,
            strategy: self.strategy,
            init: self.init,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == CellStatus::Ok
    }

    /// Mean validation score per pair over seeds.
    pub fn mean_predictions(&self) -> BTreeMap<String, f64> {
        let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
        for p in &self.predictions {
            let e = acc.entry(p.pair_id.clone()).or_default();
            e.0 += p.score;
            e.1 += 1;
        }
        acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
    }
}

/// Random-init versus pretrained comparison for one (task, strategy, metric).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitComparison {
    pub task: Task,
    pub strategy: SplitStrategy,
    pub metric: String,
    pub random: Option<CvAggregate>,
    pub pretrained: Option<CvAggregate>,
    /// `"pretrained"`, `"random"` or `"tie"`; `None` if either side is missing.
    pub higher: Option<String>,
    /// One-sided paired t-test, alternative pretrained > random, paired by (seed, fold).
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreadthEntry {
    pub init: InitMode,
    pub row: BreadthRow,
}

/// Full machine-readable result of a matrix run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub cells: Vec<CellResult>,
    pub comparisons: Vec<InitComparison>,
    pub subgroups: Vec<SubgroupRow>,
    pub breadth: Vec<BreadthEntry>,
    pub notes: Vec<String>,
}

impl ReportBundle {
    pub fn empty(config: ExperimentConfig) -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            config,
            cells: Vec::new(),
            comparisons: Vec::new(),
            subgroups: Vec::new(),
            breadth: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn has_failures(&self) -> bool {
        self.cells.iter().any(|c| !c.is_ok())
    }

    pub fn cell(&self, task: Task, strategy: SplitStrategy, init: InitMode) -> Option<&CellResult> {
        self.cells
            .iter()
            .find(|c| c.task == task && c.strategy == strategy && c.init == init)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let b: ReportBundle = serde_json::from_str(text)?;
        if b.schema_version != REPORT_SCHEMA_VERSION {
            return Err(Error::Config(format!("unsupported report schema version {}", b.schema_version)));
        }
        Ok(b)
    }
}

struct Unit {
    spec: ExperimentSpec,
    seed: u64,
    fold: usize,
}

type UnitOutcome = Result<(FoldResult, Vec<FoldPrediction>)>;

fn run_unit(
    dataset: &Dataset,
    folds: &FoldAssignment,
    unit: &Unit,
    pretrained: Option<&ModelParams>,
    cfg: &ExperimentConfig,
) -> UnitOutcome {
    let init = match unit.spec.init {
        InitMode::Random => Init::Random,
        InitMode::Pretrained => Init::Pretrained(
            pretrained
                .ok_or_else(|| Error::Config("pretrained weights unavailable".into()))?
                .clone(),
        ),
    };
    let tcfg = crate::model::TrainingConfig { seed: unit.seed, ..cfg.training };
    let trained = train(dataset, folds, unit.fold, &init, &cfg.model, &tcfg)?;
    let n_val = trained.validation_labels.len();
    let positives = trained.validation_labels.iter().filter(|&&l| l).count();
    let (a, p) = match ScoredLabels::new(trained.validation_scores.clone(), trained.validation_labels.clone()) {
        Ok(s) => (auroc(&s).ok(), auprc(&s).ok()),
        Err(_) => (None, None),
    };
    let result = FoldResult {
        seed: unit.seed,
        fold: unit.fold,
        n_train: folds.pair_ids.len() - n_val,
        n_validation: n_val,
        validation_positivity: if n_val == 0 { 0.0 } else { positives as f64 / n_val as f64 },
        auroc: a,
        auprc: p,
        final_loss: trained.log.final_loss(),
    };
    let preds = trained
        .validation_pair_ids
        .into_iter()
        .zip(trained.validation_labels)
        .zip(trained.validation_scores)
        .map(|((pair_id, label), score)| FoldPrediction {
            seed: unit.seed,
            fold: unit.fold,
            pair_id,
            label,
            score,
        })
        .collect();
    Ok((result, preds))
}

fn aggregate(values: impl Iterator<Item = Option<f64>>) -> Option<CvAggregate> {
    let v: Vec<f64> = values.flatten().collect();
    aggregate_cv(&v).ok()
}

/// Runs every cell of `cfg` on `dataset`.
///
/// Pretrained cells start from weights pretrained on `corpus` with the run
/// seed. Folds are built once per (task, strategy, seed) and shared by both
/// init modes, so the init comparison is paired. A failing cell is recorded
/// with its cause and the remaining cells still run. Work units run on a
/// pool of `jobs` threads; results do not depend on `jobs`.
pub fn run_matrix(
    dataset: &Dataset,
    clusters: Option<&ClusterAssignment>,
    cfg: &ExperimentConfig,
    corpus: &[PairPrompt],
    jobs: usize,
) -> Result<ReportBundle> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
    pool.install(|| run_matrix_inner(dataset, clusters, cfg, corpus))
}

fn run_matrix_inner(
    dataset: &Dataset,
    clusters: Option<&ClusterAssignment>,
    cfg: &ExperimentConfig,
    corpus: &[PairPrompt],
) -> Result<ReportBundle> {
    let specs = cfg.specs();
    let mut bundle = ReportBundle::empty(cfg.clone());

    let owned_clusters;
    let clusters = if cfg.strategies.contains(&SplitStrategy::MabClusterExclusive) {
        match clusters {
            Some(c) => Some(c),
            None => {
                let cc = ClusterConfig {
                    min_identity: cfg.cluster_min_identity,
                    ..ClusterConfig::default()
                };
                owned_clusters = greedy_cluster(dataset.antibodies(), &cc)?;
                Some(&owned_clusters)
            }
        }
    } else {
        None
    };

    // Fold assignments per (task, strategy, seed).
    let mut fold_sets: BTreeMap<(Task, SplitStrategy, u64), std::result::Result<FoldAssignment, String>> = BTreeMap::new();
    for &task in &cfg.tasks {
        for &strategy in &cfg.strategies {
            for &seed in &cfg.seeds {
                let split = SplitConfig { k: cfg.k, seed, strategy };
                let c = if strategy == SplitStrategy::MabClusterExclusive { clusters } else { None };
                let r = make_folds(dataset, task, &split, c).map_err(|e| e.to_string());
                fold_sets.insert((task, strategy, seed), r);
            }
        }
    }

    // Pretrained weights per seed.
    let mut pretrained: BTreeMap<u64, std::result::Result<ModelParams, String>> = BTreeMap::new();
    if cfg.inits.contains(&InitMode::Pretrained) {
        let results: Vec<(u64, std::result::Result<ModelParams, String>)> = cfg
            .seeds
            .par_iter()
            .map(|&seed| {
                let pcfg = cfg.pretraining.training_config(&cfg.training, seed);
                let r = pretrain_mlm(corpus, &cfg.model, &pcfg).map(|(p, _)| p).map_err(|e| e.to_string());
                (seed, r)
            })
            .collect();
        pretrained.extend(results);
    }

    let mut units = Vec::new();
    for spec in &specs {
        for &seed in &cfg.seeds {
            for fold in 0..cfg.k {
                units.push(Unit { spec: *spec, seed, fold });
            }
        }
    }
    let outcomes: Vec<std::result::Result<(FoldResult, Vec<FoldPrediction>), String>> = units
        .par_iter()
        .map(|u| {
            let folds = fold_sets[&(u.spec.task, u.spec.strategy, u.seed)].as_ref().map_err(|e| e.clone())?;
            let weights = match u.spec.init {
                InitMode::Pretrained => Some(
                    pretrained[&u.seed]
                        .as_ref()
                        .map_err(|e| format!("pretraining failed: {e}"))?,
                ),
                InitMode::Random => None,
            };
            run_unit(dataset, folds, u, weights, cfg).map_err(|e| e.to_string())
        })
        .collect();

    let per_cell = cfg.seeds.len() * cfg.k;
    for (spec, chunk) in specs.iter().zip(outcomes.chunks(per_cell)) {
        let mut folds = Vec::new();
        let mut predictions = Vec::new();
        let mut causes = Vec::new();
        for o in chunk {
            match o {
                Ok((f, p)) => {
                    folds.push(f.clone());
                    predictions.extend(p.iter().cloned());
                }
                Err(e) => {
                    if !causes.contains(e) {
                        causes.push(e.clone());
                    }
                }
            }
        }
        let status = if causes.is_empty() {
            CellStatus::Ok
        } else {
            CellStatus::Failed { cause: causes.join("; ") }
        };
        bundle.cells.push(CellResult {
            task: spec.task,
            strategy: spec.strategy,
            init: spec.init,
            status,
            auroc: aggregate(folds.iter().map(|f| f.auroc)),
            auprc: aggregate(folds.iter().map(|f| f.auprc)),
            folds,
            predictions,
        });
    }

    bundle.comparisons = compare_inits(&bundle.cells, cfg);
    for cell in bundle.cells.iter().filter(|c| c.is_ok()) {
        for ch in CHARACTERISTICS {
            bundle.subgroups.extend(subgroup_auroc(dataset, cell, ch, &mut bundle.notes)?);
        }
    }
    for cell in bundle.cells.iter().filter(|c| c.is_ok() && c.strategy.is_antibody_exclusive()) {
        let preds = cell.mean_predictions();
        for subtype in [Subtype::H1, Subtype::H3] {
            let outcome = compute_breadth(dataset, &preds, cell.task, cell.strategy, subtype, MIN_ASSAYS)
                .and_then(|recs| breadth_metrics(&recs, BROAD_THRESHOLD));
            match outcome {
                Ok(metrics) => bundle.breadth.push(BreadthEntry {
                    init: cell.init,
                    row: BreadthRow {
                        task: cell.task,
                        subtype,
                        split: cell.strategy,
                        metrics,
                    },
                }),
                Err(e) => bundle.notes.push(format!(
                    "breadth {}/{}/{}/{subtype}: {e}",
                    cell.task, cell.strategy, cell.init
                )),
            }
        }
    }
    Ok(bundle)
}

fn compare_inits(cells: &[CellResult], cfg: &ExperimentConfig) -> Vec<InitComparison> {
    let mut out = Vec::new();
    for &task in &cfg.tasks {
        for &strategy in &cfg.strategies {
            let find = |init| cells.iter().find(|c| c.task == task && c.strategy == strategy && c.init == init);
            let (r, p) = (find(InitMode::Random), find(InitMode::Pretrained));
            if r.is_none() && p.is_none() {
                continue;
            }
            for metric in ["auroc", "auprc"] {
                let agg = |c: Option<&CellResult>| {
                    c.and_then(|c| if metric == "auroc" { c.auroc } else { c.auprc })
                };
                let (ra, pa) = (agg(r), agg(p));
                let higher = match (ra, pa) {
                    (Some(a), Some(b)) if b.mean > a.mean => Some("pretrained".to_string()),
                    (Some(a), Some(b)) if a.mean > b.mean => Some("random".to_string()),
                    (Some(_), Some(_)) => Some("tie".to_string()),
                    _ => None,
                };
                let p_value = match (r, p) {
                    (Some(r), Some(p)) => paired_p(r, p, metric),
                    _ => None,
                };
                out.push(InitComparison {
                    task,
                    strategy,
                    metric: metric.to_string(),
                    random: ra,
                    pretrained: pa,
                    higher,
                    p_value,
                });
            }
        }
    }
    out
}

fn paired_p(random: &CellResult, pretrained: &CellResult, metric: &str) -> Option<f64> {
    let get = |f: &FoldResult| if metric == "auroc" { f.auroc } else { f.auprc };
    let by_key: BTreeMap<(u64, usize), f64> = random
        .folds
        .iter()
        .filter_map(|f| get(f).map(|v| ((f.seed, f.fold), v)))
        .collect();
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for f in &pretrained.folds {
        if let (Some(v), Some(&w)) = (get(f), by_key.get(&(f.seed, f.fold))) {
            a.push(v);
            b.push(w);
        }
    }
    one_sided_paired_t_test(&a, &b).ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TrainingConfig;
    use crate::synth::{generate, SyntheticConfig};

    fn smoke_config() -> ExperimentConfig {
        ExperimentConfig {
            tasks: vec![Task::Binding],
            strategies: vec![SplitStrategy::MabExclusive],
            inits: vec![InitMode::Random],
            k: 2,
            seeds: vec![1],
            training: TrainingConfig {
                total_steps: 10,
                max_lr: 3e-3,
                ..TrainingConfig::default()
            },
            ..ExperimentConfig::default()
        }
    }

    fn small() -> Dataset {
        let cfg = SyntheticConfig {
            n_families: 2,
            antibodies_per_family: 4,
            n_antigens: 5,
            pairs_per_antibody: 5,
            ..SyntheticConfig::default()
        };
        generate(&cfg).unwrap().dataset
    }

    #[test]
    fn smoke_cell_emits_all_fields() {
        let ds = small();
        let bundle = run_matrix(&ds, None, &smoke_config(), &[], 1).unwrap();
        assert_eq!(bundle.cells.len(), 1);
        let cell = &bundle.cells[0];
        assert!(cell.is_ok(), "{:?}", cell.status);
        assert_eq!(cell.folds.len(), 2);
        assert_eq!(cell.predictions.len(), ds.task_pairs(Task::Binding).len());
        assert_eq!(bundle.comparisons.len(), 2);
        let text = bundle.to_json().unwrap();
        for field in ["schema_version", "cells", "comparisons", "subgroups", "breadth", "notes", "predictions"] {
            assert!(text.contains(&format!("\"{field}\"")), "{field}");
        }
    }

    #[test]
    fn failures_are_isolated() {
        let ds = small();
        let cfg = ExperimentConfig {
            strategies: vec![SplitStrategy::Lenient, SplitStrategy::HaExclusive],
            k: 6,
            ..smoke_config()
        };
        // 5 antigens cannot fill 6 antigen-exclusive folds.
        let bundle = run_matrix(&ds, None, &cfg, &[], 1).unwrap();
        assert!(bundle.cell(Task::Binding, SplitStrategy::Lenient, InitMode::Random).unwrap().is_ok());
        let failed = bundle.cell(Task::Binding, SplitStrategy::HaExclusive, InitMode::Random).unwrap();
        assert!(matches!(&failed.status, CellStatus::Failed { cause } if cause.contains("infeasible")));
        assert!(bundle.has_failures());
    }

    #[test]
    fn pretrained_cells_fail_without_corpus() {
        let ds = small();
        let cfg = ExperimentConfig { inits: vec![InitMode::Pretrained], ..smoke_config() };
        let bundle = run_matrix(&ds, None, &cfg, &[], 1).unwrap();
        assert!(!bundle.cells[0].is_ok());
    }
}
