//! Replays the checked-in fuzz seeds through the same paths the fuzz targets
//! exercise, so the seeds stay meaningful without a nightly toolchain.

use std::path::PathBuf;

use uwgnn_core::dataset::{parse_jsonl, to_jsonl};
use uwgnn_core::nn::parse_checkpoint;
use uwgnn_core::runconfig::parse_config;
use uwgnn_core::uwgnn::Uwgnn;

fn seeds(target: &str) -> Vec<String> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir).unwrap().map(|e| e.unwrap().path()).collect();
    paths.sort();
    assert!(!paths.is_empty(), "no seeds in {}", dir.display());
    paths.iter().map(|p| std::fs::read_to_string(p).unwrap()).collect()
}

#[test]
fn dataset_seeds_round_trip() {
    for text in seeds("dataset") {
        let (header, samples) = parse_jsonl(&text).unwrap();
        let (_, again) = parse_jsonl(&to_jsonl(&header, &samples).unwrap()).unwrap();
        assert_eq!(again, samples);
    }
}

#[test]
fn checkpoint_seeds_build_models() {
    for text in seeds("checkpoint") {
        let (tensors, meta) = parse_checkpoint(&text).unwrap();
        let model = Uwgnn::from_checkpoint(tensors, &meta).unwrap();
        assert_eq!(model.param_count(), meta.param_count);
    }
}

#[test]
fn runconfig_seeds_keep_their_digest() {
    for text in seeds("runconfig") {
        let cfg = parse_config(&text).unwrap();
        assert_eq!(parse_config(&cfg.canonical()).unwrap().digest(), cfg.digest());
    }
}
