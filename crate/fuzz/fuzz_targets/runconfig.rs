#![no_main]
use libfuzzer_sys::fuzz_target;
use uwgnn_core::runconfig::parse_config;

fuzz_target!(|data: &str| {
    if let Ok(cfg) = parse_config(data) {
        let back = parse_config(&cfg.canonical()).unwrap();
        assert_eq!(back.digest(), cfg.digest());
    }
});
