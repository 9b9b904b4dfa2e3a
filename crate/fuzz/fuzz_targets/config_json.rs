#![no_main]
use libfuzzer_sys::fuzz_target;

use groupoid_vi::ExperimentConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = ExperimentConfig::from_json(text) {
            // Accepted configs must survive a serialize/parse round trip.
            let again = serde_json::to_string(&cfg).expect("serializable");
            let back = ExperimentConfig::from_json(&again).expect("round trip");
            assert_eq!(serde_json::to_string(&back).unwrap(), again);
        }
    }
});
