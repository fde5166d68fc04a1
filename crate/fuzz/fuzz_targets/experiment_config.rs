#![no_main]

use libfuzzer_sys::fuzz_target;
use privlq::harness::{calibrate_variants, ExperimentConfig};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(cfg) = ExperimentConfig::from_json(text) else {
        return;
    };
    let round = serde_json::to_string(&cfg).expect("config serializes");
    let again = ExperimentConfig::from_json(&round).expect("round trip parses");
    assert_eq!(cfg.hash(), again.hash());
    let _ = calibrate_variants(&cfg);
});
