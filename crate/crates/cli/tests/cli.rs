use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use uwgnn_core::dataset::load_dataset;
use uwgnn_core::nn::parse_checkpoint;
use uwgnn_core::rng::derive_seed;
use uwgnn_core::runconfig::RunConfig;
use uwgnn_core::uwgnn::Uwgnn;

fn uwgnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uwgnn")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = uwgnn(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn generate(dir: &Path, name: &str, n: usize, count: usize, seed: u64) -> PathBuf {
    let path = dir.join(name);
    ok(&[
        "generate",
        "--n",
        &n.to_string(),
        "--count",
        &count.to_string(),
        "--seed",
        &seed.to_string(),
        "--out",
        p(&path),
    ]);
    path
}

fn baseline_rows(path: &Path) -> Vec<Vec<String>> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "id,wmmse_rate,best_rate,config_digest");
    lines.map(|l| l.split(',').map(str::to_owned).collect()).collect()
}

#[test]
fn generate_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = generate(dir.path(), "a.jsonl", 4, 25, 9);
    let b = generate(dir.path(), "b.jsonl", 4, 25, 9);
    let c = generate(dir.path(), "c.jsonl", 4, 25, 10);
    let (ba, bb, bc) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap(), std::fs::read(&c).unwrap());
    assert_eq!(ba, bb);
    assert_ne!(ba, bc);
    let (header, samples) = load_dataset(&a).unwrap();
    assert_eq!(samples.len(), 25);
    assert!(samples.iter().all(|s| s.n_users() == 4));
    let cfg = RunConfig {
        seed: 9,
        n_users: 4,
        count: 25,
        ..RunConfig::default()
    };
    assert_eq!(header.config_digest.unwrap(), cfg.digest());
}

#[test]
fn generate_zero_count_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let path = generate(dir.path(), "empty.jsonl", 3, 0, 1);
    let (_, samples) = load_dataset(&path).unwrap();
    assert!(samples.is_empty());
}

#[test]
fn baseline_single_user_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), "one.jsonl", 1, 10, 2);
    let out = dir.path().join("base.csv");
    ok(&["baseline", "--dataset", p(&data), "--restarts", "3", "--out", p(&out)]);
    let (_, samples) = load_dataset(&data).unwrap();
    let rows = baseline_rows(&out);
    assert_eq!(rows.len(), 10);
    for (inst, row) in samples.iter().zip(&rows) {
        let h = inst.h(0, 0);
        let closed = inst.lambda()[0] * (1.0 + h * h * inst.p_max() / inst.sigma2()).log2();
        let single: f64 = row[1].parse().unwrap();
        assert!((single - closed).abs() <= 1e-12, "{single} vs {closed}");
    }
}

#[test]
fn baseline_best_of_restarts_dominates_single_run() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), "d.jsonl", 5, 20, 3);
    let out = dir.path().join("base.csv");
    ok(&["baseline", "--dataset", p(&data), "--restarts", "8", "--out", p(&out)]);
    for row in baseline_rows(&out) {
        let (single, best): (f64, f64) = (row[1].parse().unwrap(), row[2].parse().unwrap());
        assert!(best >= single);
    }
}

fn train(dir: &Path, data: &Path, name: &str, epochs: usize) -> PathBuf {
    let out = dir.join(name);
    ok(&[
        "train",
        "--dataset",
        p(data),
        "--epochs",
        &epochs.to_string(),
        "--set",
        "batch_size=8",
        "--seed",
        "4",
        "--out",
        p(&out),
    ]);
    out
}

fn curve_file(dir: &Path, stem: &str) -> PathBuf {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|path| {
            let name = path.file_name().unwrap().to_string_lossy();
            name.starts_with(&format!("{stem}.curve-")) && name.ends_with(".csv")
        })
        .expect("curve file")
}

#[test]
fn train_is_deterministic_and_writes_one_curve_row_per_epoch() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), "train.jsonl", 3, 24, 5);
    let a = train(dir.path(), &data, "a.json", 2);
    let b = train(dir.path(), &data, "b.json", 2);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let curve = std::fs::read_to_string(curve_file(dir.path(), "a")).unwrap();
    let lines: Vec<&str> = curve.lines().collect();
    assert_eq!(lines[0], "epoch,train_loss,val_ratio");
    assert_eq!(lines.len(), 3);
}

#[test]
fn zero_epochs_saves_the_initial_weights() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), "train.jsonl", 3, 8, 6);
    let ckpt = train(dir.path(), &data, "init.json", 0);
    let (model, meta) = Uwgnn::load(&ckpt).unwrap();
    let fresh = Uwgnn::new(model.config().clone(), derive_seed(4, 1)).unwrap();
    let values = |m: &Uwgnn| m.params().tensors().iter().flat_map(|t| t.values.clone()).collect::<Vec<f64>>();
    assert_eq!(values(&model), values(&fresh));
    assert_eq!(meta.param_count, fresh.param_count());
    let (tensors, _) = parse_checkpoint(&std::fs::read_to_string(&ckpt).unwrap()).unwrap();
    assert_eq!(tensors.len(), fresh.params().len());
}

#[test]
fn eval_report_carries_the_config_digest() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate(dir.path(), "test.jsonl", 4, 12, 7);
    let ckpt = train(dir.path(), &data, "m.json", 0);
    let reports = dir.path().join("reports");
    ok(&[
        "eval",
        "--checkpoint",
        p(&ckpt),
        "--suite",
        "ratio-table",
        "--dataset",
        p(&data),
        "--set",
        "restarts=2",
        "--seed",
        "7",
        "--out",
        p(&reports),
    ]);
    let cfg = RunConfig {
        seed: 7,
        restarts: 2,
        ..RunConfig::default()
    };
    let digest = cfg.digest();
    let json = std::fs::read_dir(&reports)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|path| path.extension().is_some_and(|e| e == "json"))
        .expect("summary json");
    assert!(json.file_name().unwrap().to_string_lossy().contains(&digest[..12]));
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(summary["config_digest"], digest.as_str());
    assert_eq!(summary["instances"], 12);
    assert!(summary["mean_ratio"].as_f64().unwrap().is_finite());
}

#[test]
fn usage_errors_exit_nonzero() {
    let out = uwgnn(&["eval", "--checkpoint", "x.json", "--suite", "no-such-suite"]);
    assert_eq!(out.status.code(), Some(2));
    let out = uwgnn(&["generate", "--count", "-1", "--out", "x.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.json");
    let out = uwgnn(&["eval", "--checkpoint", p(&missing), "--suite", "ratio-table", "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
    let out = uwgnn(&["generate", "--set", "bogus=1", "--out", p(&dir.path().join("x.jsonl"))]);
    assert_eq!(out.status.code(), Some(1));
}
