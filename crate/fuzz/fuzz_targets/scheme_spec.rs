#![no_main]
use libfuzzer_sys::fuzz_target;

use gvi_core::schemes::SchemeSpec;

fuzz_target!(|data: &[u8]| {
    let Ok(spec) = serde_json::from_slice::<SchemeSpec>(data) else { return };
    let _ = spec.order();
    if let Some(table) = &spec.table {
        if let Ok(t) = table.resolve() {
            assert!(t.stages() > 0);
        }
    }
});
