use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_abag-bench");

const SYNTH_TOML: &str = "n_families = 3\nantibodies_per_family = 4\nn_antigens = 8\npairs_per_antibody = 8\n";

const MATRIX_TOML: &str = r#"
tasks = ["binding"]
strategies = ["lenient", "ha_exclusive"]
inits = ["random", "pretrained"]
k = 2
seeds = [0]

[model]
d_model = 8
n_layers = 1
n_heads = 2
d_ff = 16
max_input_len = 128

[training]
total_steps = 6
max_lr = 0.003

[pretraining]
steps = 4
corpus_size = 20
"#;

fn run(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("ABAG_BENCH_SEED")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Writes a small synthetic dataset and the two configs into `dir`.
fn setup(dir: &Path) -> std::path::PathBuf {
    fs::write(dir.join("synth.toml"), SYNTH_TOML).unwrap();
    fs::write(dir.join("matrix.toml"), MATRIX_TOML).unwrap();
    let data = dir.join("data");
    let o = run(&["synth", "--config", p(&dir.join("synth.toml")), "--seed", "3", "--out", p(&data)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    data
}

#[test]
fn synth_load_cluster_split() {
    let dir = tempfile::tempdir().unwrap();
    let data = setup(dir.path());
    for f in ["antibodies.fasta", "antigens.fasta", "assays.csv", "ground_truth.json"] {
        assert!(data.join(f).exists(), "{f}");
    }

    let o = run(&["load", "--data", p(&data), "--task", "binding"]);
    assert_eq!(code(&o), 0);
    assert!(!o.stdout.is_empty());

    let out = dir.path().join("clusters");
    assert_eq!(code(&run(&["cluster", "--data", p(&data), "--out", p(&out)])), 0);
    let tsv = fs::read_to_string(out.join("clusters.tsv")).unwrap();
    assert_eq!(tsv.lines().filter(|l| !l.is_empty()).count(), 12);

    let out = dir.path().join("split");
    let o = run(&["split", "--data", p(&data), "--strategy", "mab_exclusive", "--k", "3", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("folds.csv")).unwrap();
    assert!(csv.starts_with("pair_id,fold"));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("validation.json")).unwrap()).unwrap();
    assert_eq!(report["violations"], serde_json::json!([]));
}

#[test]
fn seed_env_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("synth.toml"), format!("{SYNTH_TOML}seed = 1\n")).unwrap();
    let gen = |out: &str, env: Option<&str>| {
        let mut cmd = Command::new(BIN);
        cmd.args(["synth", "--config", p(&dir.path().join("synth.toml")), "--out", p(&dir.path().join(out))]);
        cmd.env_remove("ABAG_BENCH_SEED").env("RUST_LOG", "warn");
        if let Some(v) = env {
            cmd.env("ABAG_BENCH_SEED", v);
        }
        assert!(cmd.status().unwrap().success());
        fs::read_to_string(dir.path().join(out).join("assays.csv")).unwrap()
    };
    let plain = gen("a", None);
    let env7 = gen("b", Some("7"));
    let env7_again = gen("c", Some("7"));
    assert_ne!(plain, env7);
    assert_eq!(env7, env7_again);
}

#[test]
fn train_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let data = setup(dir.path());
    let out = dir.path().join("train");
    let o = run(&[
        "train", "--data", p(&data), "--config", p(&dir.path().join("matrix.toml")), "--strategy", "lenient",
        "--init", "pretrained", "--fold", "1", "--out", p(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["predictions.csv", "metrics.json", "log_fold1.csv", "model_fold1.json", "pretrained.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let log = fs::read_to_string(out.join("log_fold1.csv")).unwrap();
    assert_eq!(log.lines().count(), 7);
}

#[test]
fn matrix_report_and_breadth() {
    let dir = tempfile::tempdir().unwrap();
    let data = setup(dir.path());
    let cfg = dir.path().join("matrix.toml");
    let out = dir.path().join("run");
    let o = run(&["run-matrix", "--data", p(&data), "--config", p(&cfg), "--jobs", "1", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let json = fs::read_to_string(out.join("report.json")).unwrap();
    let radar = fs::read_to_string(out.join("radar.svg")).unwrap();
    assert_eq!(radar.matches("class=\"axis\"").count(), 2);
    assert_eq!(radar.matches("class=\"series\"").count(), 2);

    // Same config, more workers: identical report.
    let out2 = dir.path().join("run2");
    assert_eq!(code(&run(&["run-matrix", "--data", p(&data), "--config", p(&cfg), "--jobs", "2", "--out", p(&out2)])), 0);
    assert_eq!(json, fs::read_to_string(out2.join("report.json")).unwrap());

    let out3 = dir.path().join("rerender");
    let o = run(&["report", "--report", p(&out.join("report.json")), "--format", "json,csv", "--out", p(&out3)]);
    assert_eq!(code(&o), 0);
    assert_eq!(json, fs::read_to_string(out3.join("report.json")).unwrap());
    assert!(out3.join("comparison.csv").exists());
    assert!(!out3.join("radar.svg").exists());

    let o = run(&["breadth", "--data", p(&data), "--report", p(&out.join("report.json"))]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let data = setup(dir.path());

    // Missing dataset directory.
    assert_eq!(code(&run(&["load", "--data", p(&dir.path().join("nope"))])), 4);

    // Corrupt assay table.
    let bad = dir.path().join("bad");
    fs::create_dir(&bad).unwrap();
    for f in ["antibodies.fasta", "antigens.fasta"] {
        fs::copy(data.join(f), bad.join(f)).unwrap();
    }
    fs::write(bad.join("assays.csv"), "antibody_id,antigen_id,assay,raw_value\nghost,ha_000,binding,2.0\n").unwrap();
    assert_eq!(code(&run(&["load", "--data", p(&bad)])), 2);

    // Unknown strategy is a usage error.
    assert_eq!(code(&run(&["split", "--data", p(&data), "--strategy", "bogus"])), 2);

    // HA-exclusive with more folds than antigens fails; lenient still runs.
    let cfg = dir.path().join("partial.toml");
    fs::write(&cfg, MATRIX_TOML.replace("k = 2", "k = 9").replace("inits = [\"random\", \"pretrained\"]", "inits = [\"random\"]")).unwrap();
    let out = dir.path().join("partial");
    let o = run(&["run-matrix", "--data", p(&data), "--config", p(&cfg), "--out", p(&out)]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let states: Vec<&str> = report["cells"].as_array().unwrap().iter().map(|c| c["status"]["state"].as_str().unwrap()).collect();
    assert_eq!(states.len(), 2);
    assert!(states.contains(&"ok"));
    assert!(states.contains(&"failed"));

    // Commands that write several files need --out.
    assert_eq!(code(&run(&["synth"])), 2);
}
