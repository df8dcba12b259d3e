use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use abag_core::breadth::{breadth_metrics, breadth_table_csv, compute_breadth, BreadthRow, BROAD_THRESHOLD};
use abag_core::dataset::{load_dataset, read_antibody_fasta, save_dataset, summarize, DatasetFormat, Subtype, ANTIBODY_FASTA};
use abag_core::harness::{
    dataset_corpus, emit_report, run_matrix, synthetic_corpus, ExperimentConfig, FoldResult, InitMode, ReportBundle,
    ReportFormat,
};
use abag_core::identity::{greedy_cluster, ClusterAssignment, ClusterConfig};
use abag_core::metrics::{aggregate_cv, auprc, auroc, ScoredLabels};
use abag_core::model::{load_checkpoint, pretrain_mlm, save_checkpoint, train, Init, PairPrompt};
use abag_core::split::{make_folds, validate_folds, SplitConfig, SplitStrategy};
use abag_core::synth::{generate, GroundTruth, SyntheticConfig};
use abag_core::{Dataset, Error, Result, Task};
use clap::{Parser, Subcommand};

const GROUND_TRUTH_JSON: &str = "ground_truth.json";

#[derive(Parser, Debug)]
#[command(name = "abag-bench", version, about = "Antibody-antigen activity prediction benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Assay to use (binding or hai).
    #[arg(long, global = true)]
    task: Option<Task>,
    /// Split strategy (lenient, ha_exclusive, mab_exclusive, mab_cluster_exclusive).
    #[arg(long, global = true)]
    strategy: Option<SplitStrategy>,
    /// Encoder initialization (random or pretrained).
    #[arg(long, global = true)]
    init: Option<InitMode>,
    /// Number of cross-validation folds.
    #[arg(long, global = true)]
    k: Option<usize>,
    /// Seed; replaces the config seed(s).
    #[arg(long, global = true, env = "ABAG_BENCH_SEED")]
    seed: Option<u64>,
    /// TOML or JSON config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate a dataset directory and print its characteristic summary.
    Load {
        #[arg(long)]
        data: PathBuf,
    },
    /// Cluster antibodies by sequence identity; writes member/representative TSV.
    Cluster {
        /// Dataset directory or antibody FASTA file.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        min_identity: Option<f64>,
    },
    /// Assign pairs to folds and check the assignment for leakage.
    Split {
        #[arg(long)]
        data: PathBuf,
        /// Precomputed cluster TSV for the cluster-exclusive strategy.
        #[arg(long)]
        clusters: Option<PathBuf>,
    },
    /// Generate a synthetic dataset with oracle labels.
    Synth {
        /// Use realistic chain lengths instead of the desk-scale defaults.
        #[arg(long)]
        realistic: bool,
    },
    /// Train and evaluate one (task, strategy, init) cell.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Train only this fold.
        #[arg(long)]
        fold: Option<usize>,
        /// Pretrained checkpoint; pretrains from scratch when omitted.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Synthetic ground truth used to build the pretraining corpus.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        clusters: Option<PathBuf>,
    },
    /// Run the experiment matrix and write all report artifacts.
    RunMatrix {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        clusters: Option<PathBuf>,
    },
    /// Recompute breadth tables from a report's validation predictions.
    Breadth {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[arg(long, default_value_t = abag_core::breadth::MIN_ASSAYS)]
        min_assays: usize,
    },
    /// Re-emit artifacts from a saved report.json.
    Report {
        #[arg(long)]
        report: PathBuf,
        /// Comma-separated subset of json, csv, svg.
        #[arg(long, value_delimiter = ',', default_value = "json,csv,svg")]
        format: Vec<ReportFormat>,
    },
}

/// Non-error results that still map to a non-zero exit code.
enum Outcome {
    Success,
    ValidationFailed(String),
    PartialFailure(String),
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io { .. } => 4,
        Error::Parse { .. }
        | Error::Integrity(_)
        | Error::Domain { .. }
        | Error::Infeasible { .. }
        | Error::Config(_)
        | Error::Protocol(_)
        | Error::Lookup(_)
        | Error::Serde(_) => 2,
        Error::UndefinedMetric(_) | Error::Numeric { .. } => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::ValidationFailed(msg)) => {
            eprintln!("validation failed: {msg}");
            ExitCode::from(2)
        }
        Ok(Outcome::PartialFailure(msg)) => {
            eprintln!("some cells failed: {msg}");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: &Cli) -> Result<Outcome> {
    match &cli.command {
        Command::Load { data } => cmd_load(cli, data),
        Command::Cluster { data, min_identity } => cmd_cluster(cli, data, *min_identity),
        Command::Split { data, clusters } => cmd_split(cli, data, clusters.as_deref()),
        Command::Synth { realistic } => cmd_synth(cli, *realistic),
        Command::Train { data, fold, checkpoint, truth, clusters } => {
            cmd_train(cli, data, *fold, checkpoint.as_deref(), truth.as_deref(), clusters.as_deref())
        }
        Command::RunMatrix { data, truth, clusters } => cmd_run_matrix(cli, data, truth.as_deref(), clusters.as_deref()),
        Command::Breadth { data, report, min_assays } => cmd_breadth(cli, data, report, *min_assays),
        Command::Report { report, format } => cmd_report(cli, report, format),
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn require_out(cli: &Cli) -> Result<&Path> {
    cli.out.as_deref().ok_or_else(|| Error::Config("--out <dir> is required for this command".into()))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Config file (or defaults) with command-line overrides applied.
fn experiment_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::from_path(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(t) = cli.task {
        cfg.tasks = vec![t];
    }
    if let Some(s) = cli.strategy {
        cfg.strategies = vec![s];
    }
    if let Some(i) = cli.init {
        cfg.inits = vec![i];
    }
    if let Some(k) = cli.k {
        cfg.k = k;
    }
    if let Some(seed) = cli.seed {
        cfg.seeds = vec![seed];
    }
    cfg.validate()?;
    Ok(cfg)
}

fn jobs(cli: &Cli) -> usize {
    cli.jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1)
}

fn load(data: &Path) -> Result<Dataset> {
    let ds = load_dataset(data, DatasetFormat::CsvPlusFasta)?;
    log::info!(
        "loaded {} antibodies, {} antigens, {} pairs from {}",
        ds.n_antibodies(),
        ds.n_antigens(),
        ds.pairs().len(),
        data.display()
    );
    Ok(ds)
}

fn clusters_for(
    dataset: &Dataset,
    strategy: SplitStrategy,
    path: Option<&Path>,
    min_identity: f64,
) -> Result<Option<ClusterAssignment>> {
    if strategy != SplitStrategy::MabClusterExclusive {
        return Ok(None);
    }
    if let Some(p) = path {
        return ClusterAssignment::from_tsv(&read_text(p)?).map(Some);
    }
    let cc = ClusterConfig { min_identity, ..ClusterConfig::default() };
    greedy_cluster(dataset.antibodies(), &cc).map(Some)
}

/// Ground truth next to the dataset is picked up automatically.
fn ground_truth(data: &Path, explicit: Option<&Path>) -> Result<Option<GroundTruth>> {
    let path = match explicit {
        Some(p) => p.to_path_buf(),
        None => {
            let p = data.join(GROUND_TRUTH_JSON);
            if !p.exists() {
                return Ok(None);
            }
            p
        }
    };
    GroundTruth::from_json(&read_text(&path)?).map(Some)
}

fn pretraining_prompts(cfg: &ExperimentConfig, dataset: &Dataset, truth: Option<&GroundTruth>) -> Result<Vec<PairPrompt>> {
    match truth {
        Some(t) => {
            log::info!("pretraining corpus: {} synthetic complexes", cfg.pretraining.corpus_size);
            synthetic_corpus(t, &cfg.pretraining)
        }
        None => {
            log::info!("pretraining corpus: assayed pairs of the dataset");
            dataset_corpus(dataset, cfg.pretraining.corpus_max_len)
        }
    }
}

fn cmd_load(cli: &Cli, data: &Path) -> Result<Outcome> {
    let ds = load(data)?;
    let tasks = cli.task.map_or_else(|| Task::ALL.to_vec(), |t| vec![t]);
    for task in tasks {
        let csv = summarize(&ds, task)?.to_csv();
        match &cli.out {
            Some(dir) => write_file(&dir.join(format!("summary_{task}.csv")), &csv)?,
            None => print!("{csv}"),
        }
    }
    Ok(Outcome::Success)
}

fn cmd_cluster(cli: &Cli, data: &Path, min_identity: Option<f64>) -> Result<Outcome> {
    let fasta = if data.is_dir() { data.join(ANTIBODY_FASTA) } else { data.to_path_buf() };
    let name = fasta.display().to_string();
    let antibodies = read_antibody_fasta(&name, &read_text(&fasta)?)?;
    let base = match &cli.config {
        Some(p) => ExperimentConfig::from_path(p)?.cluster_min_identity,
        None => ClusterConfig::default().min_identity,
    };
    let cc = ClusterConfig { min_identity: min_identity.unwrap_or(base), ..ClusterConfig::default() };
    let assignment = greedy_cluster(&antibodies, &cc)?;
    log::info!("{} antibodies in {} clusters", assignment.n_members(), assignment.clusters.len());
    let tsv = assignment.to_tsv();
    match &cli.out {
        Some(dir) => write_file(&dir.join("clusters.tsv"), &tsv)?,
        None => print!("{tsv}"),
    }
    Ok(Outcome::Success)
}

fn cmd_split(cli: &Cli, data: &Path, clusters_path: Option<&Path>) -> Result<Outcome> {
    let ds = load(data)?;
    let cfg = experiment_config(cli)?;
    let task = cli.task.unwrap_or(cfg.tasks[0]);
    let strategy = cli.strategy.unwrap_or(cfg.strategies[0]);
    let clusters = clusters_for(&ds, strategy, clusters_path, cfg.cluster_min_identity)?;
    let split = SplitConfig { k: cfg.k, seed: cfg.seeds[0], strategy };
    let folds = make_folds(&ds, task, &split, clusters.as_ref())?;
    let report = validate_folds(&ds, &folds, strategy, clusters.as_ref());
    let report_json = serde_json::to_string_pretty(&report)?;
    match &cli.out {
        Some(dir) => {
            write_file(&dir.join("folds.csv"), &folds.to_csv())?;
            write_file(&dir.join("validation.json"), &report_json)?;
        }
        None => print!("{}", folds.to_csv()),
    }
    log::info!("positivity spread {:.3} across {} folds", report.positivity_spread, folds.k);
    if report.passed() {
        Ok(Outcome::Success)
    } else {
        Ok(Outcome::ValidationFailed(format!(
            "{} exclusivity violations, {} coverage errors",
            report.violations.len(),
            report.coverage_errors.len()
        )))
    }
}

fn cmd_synth(cli: &Cli, realistic: bool) -> Result<Outcome> {
    let out = require_out(cli)?;
    let mut cfg = match &cli.config {
        Some(p) => SyntheticConfig::from_path(p)?,
        None if realistic => SyntheticConfig::realistic(),
        None => SyntheticConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let bench = generate(&cfg)?;
    save_dataset(&bench.dataset, out)?;
    bench.truth.save(&out.join(GROUND_TRUTH_JSON))?;
    log::info!("wrote {} pairs to {}", bench.dataset.pairs().len(), out.display());
    Ok(Outcome::Success)
}

fn cmd_train(
    cli: &Cli,
    data: &Path,
    only_fold: Option<usize>,
    checkpoint: Option<&Path>,
    truth_path: Option<&Path>,
    clusters_path: Option<&Path>,
) -> Result<Outcome> {
    let out = require_out(cli)?;
    let ds = load(data)?;
    let cfg = experiment_config(cli)?;
    let task = cfg.tasks[0];
    let strategy = cfg.strategies[0];
    let init_mode = cfg.inits[0];
    let seed = cfg.seeds[0];
    let clusters = clusters_for(&ds, strategy, clusters_path, cfg.cluster_min_identity)?;
    let folds = make_folds(&ds, task, &SplitConfig { k: cfg.k, seed, strategy }, clusters.as_ref())?;

    let init = match init_mode {
        InitMode::Random => Init::Random,
        InitMode::Pretrained => {
            let params = match checkpoint {
                Some(p) => load_checkpoint(p)?,
                None => {
                    let truth = ground_truth(data, truth_path)?;
                    let corpus = pretraining_prompts(&cfg, &ds, truth.as_ref())?;
                    let pcfg = cfg.pretraining.training_config(&cfg.training, seed);
                    let (params, log) = pretrain_mlm(&corpus, &cfg.model, &pcfg)?;
                    write_file(&out.join("pretrain_log.csv"), &log.to_csv())?;
                    save_checkpoint(&params, &out.join("pretrained.json"))?;
                    params
                }
            };
            Init::Pretrained(params)
        }
    };

    let fold_ids: Vec<usize> = match only_fold {
        Some(f) => vec![f],
        None => (0..cfg.k).collect(),
    };
    let tcfg = abag_core::model::TrainingConfig { seed, ..cfg.training };
    let mut results = Vec::new();
    let mut predictions = String::from("pair_id,fold,label,score\n");
    for &fold in &fold_ids {
        let trained = train(&ds, &folds, fold, &init, &cfg.model, &tcfg)?;
        let scored = ScoredLabels::new(trained.validation_scores.clone(), trained.validation_labels.clone())?;
        let (a, p) = (auroc(&scored).ok(), auprc(&scored).ok());
        let n_val = trained.validation_labels.len();
        let positives = trained.validation_labels.iter().filter(|&&l| l).count();
        for ((id, label), score) in trained.validation_pair_ids.iter().zip(&trained.validation_labels).zip(&trained.validation_scores) {
            predictions.push_str(&format!("{id},{fold},{},{score}\n", u8::from(*label)));
        }
        write_file(&out.join(format!("log_fold{fold}.csv")), &trained.log.to_csv())?;
        save_checkpoint(&trained.params, &out.join(format!("model_fold{fold}.json")))?;
        println!(
            "fold {fold}: auroc {} auprc {}",
            a.map_or("n/a".into(), |v| format!("{v:.4}")),
            p.map_or("n/a".into(), |v| format!("{v:.4}"))
        );
        results.push(FoldResult {
            seed,
            fold,
            n_train: folds.pair_ids.len() - n_val,
            n_validation: n_val,
            validation_positivity: positives as f64 / n_val as f64,
            auroc: a,
            auprc: p,
            final_loss: trained.log.final_loss(),
        });
    }
    write_file(&out.join("predictions.csv"), &predictions)?;
    write_file(&out.join("metrics.json"), &serde_json::to_string_pretty(&results)?)?;
    let aucs: Vec<f64> = results.iter().filter_map(|r| r.auroc).collect();
    if let Ok(agg) = aggregate_cv(&aucs) {
        println!("{task} {strategy} {init_mode}: auroc {}", agg.display());
    }
    Ok(Outcome::Success)
}

fn cmd_run_matrix(cli: &Cli, data: &Path, truth_path: Option<&Path>, clusters_path: Option<&Path>) -> Result<Outcome> {
    let out = require_out(cli)?;
    let ds = load(data)?;
    let cfg = experiment_config(cli)?;
    let clusters = clusters_for(&ds, SplitStrategy::MabClusterExclusive, clusters_path, cfg.cluster_min_identity)?
        .filter(|_| cfg.strategies.contains(&SplitStrategy::MabClusterExclusive));
    let corpus = if cfg.inits.contains(&InitMode::Pretrained) {
        let truth = ground_truth(data, truth_path)?;
        pretraining_prompts(&cfg, &ds, truth.as_ref())?
    } else {
        Vec::new()
    };
    let bundle = run_matrix(&ds, clusters.as_ref(), &cfg, &corpus, jobs(cli))?;
    let files = emit_report(&bundle, out, &ReportFormat::ALL)?;
    for c in &bundle.cells {
        let auc = c.auroc.map_or_else(|| "n/a".to_string(), |a| a.display());
        println!("{} {} {}: auroc {auc}", c.task, c.strategy, c.init);
    }
    log::info!("wrote {} files to {}", files.len(), out.display());
    if bundle.has_failures() {
        let failed = bundle.cells.iter().filter(|c| !c.is_ok()).count();
        return Ok(Outcome::PartialFailure(format!("{failed} of {} cells failed", bundle.cells.len())));
    }
    Ok(Outcome::Success)
}

fn cmd_breadth(cli: &Cli, data: &Path, report: &Path, min_assays: usize) -> Result<Outcome> {
    let ds = load(data)?;
    let bundle = ReportBundle::from_json(&read_text(report)?)?;
    let mut rows: BTreeMap<InitMode, Vec<BreadthRow>> = BTreeMap::new();
    for cell in bundle.cells.iter().filter(|c| c.is_ok() && c.strategy.is_antibody_exclusive()) {
        if cli.task.is_some_and(|t| t != cell.task) || cli.init.is_some_and(|i| i != cell.init) {
            continue;
        }
        let preds = cell.mean_predictions();
        for subtype in [Subtype::H1, Subtype::H3] {
            let records = compute_breadth(&ds, &preds, cell.task, cell.strategy, subtype, min_assays)?;
            match breadth_metrics(&records, BROAD_THRESHOLD) {
                Ok(metrics) => rows.entry(cell.init).or_default().push(BreadthRow {
                    task: cell.task,
                    subtype,
                    split: cell.strategy,
                    metrics,
                }),
                Err(e) => log::warn!("{} {} {} {subtype}: {e}", cell.task, cell.strategy, cell.init),
            }
        }
    }
    for (init, rows) in &rows {
        let csv = breadth_table_csv(rows);
        match &cli.out {
            Some(dir) => write_file(&dir.join(format!("breadth_{init}.csv")), &csv)?,
            None => print!("# {init}\n{csv}"),
        }
    }
    Ok(Outcome::Success)
}

fn cmd_report(cli: &Cli, report: &Path, formats: &[ReportFormat]) -> Result<Outcome> {
    let out = require_out(cli)?;
    let bundle = ReportBundle::from_json(&read_text(report)?)?;
    for f in emit_report(&bundle, out, formats)? {
        println!("{}", f.display());
    }
    Ok(Outcome::Success)
}
