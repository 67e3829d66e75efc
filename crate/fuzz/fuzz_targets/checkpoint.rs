#![no_main]
use libfuzzer_sys::fuzz_target;
use uwgnn_core::nn::parse_checkpoint;
use uwgnn_core::uwgnn::Uwgnn;

fuzz_target!(|data: &str| {
    if let Ok((tensors, meta)) = parse_checkpoint(data) {
        let _ = Uwgnn::from_checkpoint(tensors, &meta);
    }
});
