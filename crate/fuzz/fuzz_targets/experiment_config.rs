#![no_main]

use libfuzzer_sys::fuzz_target;
use robustbf::harness::ExperimentConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = ExperimentConfig::from_json(text) {
        let again = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(again.algorithms, cfg.algorithms);
    }
});
