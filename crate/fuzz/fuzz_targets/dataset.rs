#![no_main]
use libfuzzer_sys::fuzz_target;
use uwgnn_core::dataset::{parse_jsonl, to_jsonl};

fuzz_target!(|data: &str| {
    if let Ok((header, samples)) = parse_jsonl(data) {
        let text = to_jsonl(&header, &samples).unwrap();
        let (_, again) = parse_jsonl(&text).unwrap();
        assert_eq!(again, samples);
    }
});
