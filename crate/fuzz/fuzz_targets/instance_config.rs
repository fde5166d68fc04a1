#![no_main]

use libfuzzer_sys::fuzz_target;
use privlq::lq_system::{sample_instance, InstanceConfig, MAX_DIM};

fuzz_target!(|data: &[u8]| {
    let Ok(cfg) = serde_json::from_slice::<InstanceConfig>(data) else {
        return;
    };
    if cfg.validate().is_err() {
        return;
    }
    // Sampling is cheap only for small problems; validation already caps the rest.
    if cfg.n <= MAX_DIM && cfg.d <= MAX_DIM {
        let inst = sample_instance(&cfg).expect("validated config samples");
        assert!(inst.system.dynamics.frobenius_norm() <= 1.0 + 1e-9);
    }
});
