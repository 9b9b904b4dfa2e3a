#![no_main]
use libfuzzer_sys::fuzz_target;

use groupoid_vi::config::InitialData;
use groupoid_vi::ExperimentConfig;

// Everything past parsing: instance, system, initial data, arrow lists and
// scheme construction. Errors are fine, panics are not.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(cfg) = ExperimentConfig::from_json(text) else { return };
    let Ok(sys) = cfg.system.build() else { return };
    let inst = sys.instance();
    match &cfg.initial {
        Some(InitialData::Velocity(v)) => {
            let _ = v.build(inst);
        }
        Some(InitialData::Arrow(a)) => {
            let _ = a.build(inst);
        }
        None => {}
    }
    for a in cfg.exact.arrows.iter().chain(&cfg.check.arrows) {
        let _ = a.build(inst);
    }
    if let (Some(spec), Some(h)) = (&cfg.scheme, cfg.h) {
        let _ = spec.order();
        let _ = gvi_core::schemes::build_scheme(spec, &sys, h, &cfg.tolerances.shooting());
    }
});
