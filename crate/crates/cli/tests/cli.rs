//! End-to-end runs of the `groupoid-vi` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_groupoid-vi");

fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn run_with(cmd: &str, config: &Path, out: &Path, threads: Option<&str>) -> Output {
    let mut c = Command::new(BIN);
    c.args([cmd, "--config"]).arg(config).arg("--out").arg(out);
    match threads {
        Some(t) => c.env("GVI_THREADS", t),
        None => c.env_remove("GVI_THREADS"),
    };
    c.output().expect("binary runs")
}

fn run(cmd: &str, config: &Path, out: &Path) -> Output {
    run_with(cmd, config, out, None)
}

/// Writes `json` to a config file in `dir` and runs `cmd` with output in
/// `dir/out`.
fn run_json(cmd: &str, dir: &TempDir, json: &str) -> (Output, PathBuf) {
    let cfg = dir.path().join("config.json");
    fs::write(&cfg, json).unwrap();
    let out = dir.path().join("out");
    (run(cmd, &cfg, &out), out)
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    assert!(!text.contains('\r'));
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, rows)
}

fn column(header: &[String], rows: &[Vec<String>], name: &str) -> Vec<f64> {
    let i = header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
    rows.iter().map(|r| r[i].parse().unwrap()).collect()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn simulate_oscillator_midpoint() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let o = run("simulate", &config_path("oscillator_simulate.json"), &out);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = csv_rows(&out.join("trajectory.csv"));
    assert_eq!(header, ["step", "time", "source_0", "chart_0", "momentum_0", "energy"]);
    assert_eq!(rows.len(), 101);
    let energy = column(&header, &rows, "energy");
    assert!(energy.iter().all(|e| (e - energy[0]).abs() < 1e-3 && e.is_finite()));
    // every float cell carries 17 significant digits
    assert!(rows.iter().flat_map(|r| &r[1..]).all(|c| c.split('e').next().unwrap().trim_start_matches('-').len() == 18));
    let summary = read_json(&out.join("summary.json"));
    assert_eq!(summary["steps_completed"], 100);
    assert!(summary["failure"].is_null());
}

#[test]
fn simulate_zero_steps_writes_header_only() {
    let dir = TempDir::new().unwrap();
    let (o, out) = run_json(
        "simulate",
        &dir,
        r#"{"system":{"kind":"rigid_body","inertia":[1,2,3]},"scheme":{"kind":"tau_alpha"},
            "h":0.1,"steps":0,"initial":{"velocity":{"fiber":[0.1,0.2,0.3]}}}"#,
    );
    assert_eq!(code(&o), 0);
    assert_eq!(
        fs::read_to_string(out.join("trajectory.csv")).unwrap(),
        "step,time,chart_0,chart_1,chart_2,momentum_0,momentum_1,momentum_2,energy,casimir\n"
    );
}

#[test]
fn simulate_failure_keeps_partial_output() {
    let dir = TempDir::new().unwrap();
    let (o, out) = run_json(
        "simulate",
        &dir,
        r#"{"system":{"kind":"rigid_body","inertia":[1,2,3]},"scheme":{"kind":"tau_alpha"},
            "h":0.1,"steps":5,"initial":{"velocity":{"fiber":[0.3,0.2,0.1]}},
            "tolerances":{"newton":1e-300,"newton_max_iters":1}}"#,
    );
    assert_eq!(code(&o), 2);
    let (_, rows) = csv_rows(&out.join("trajectory.csv"));
    assert_eq!(rows.len(), 1);
    assert!(read_json(&out.join("summary.json"))["failure"].as_str().unwrap().contains("did not converge"));
}

#[test]
fn config_errors_exit_one() {
    let dir = TempDir::new().unwrap();
    let (o, _) = run_json(
        "simulate",
        &dir,
        r#"{"system":{"kind":"harmonic_oscillator"},"scheme":{"kind":"leapfrog"},"h":0.1,"steps":3}"#,
    );
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown variant `leapfrog`"));
    let (o, _) = run_json("simulate", &dir, r#"{"system":{"kind":"harmonic_oscillator"},"steps":3,"colour":"red"}"#);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown field `colour`"));
    // a group scheme on a pair instance
    let (o, _) = run_json(
        "simulate",
        &dir,
        r#"{"system":{"kind":"harmonic_oscillator"},"scheme":{"kind":"tau_alpha"},"h":0.1,"steps":3,
            "initial":{"velocity":{"base":[1],"fiber":[0]}}}"#,
    );
    assert_eq!(code(&o), 1);
    let missing = run("simulate", &dir.path().join("absent.json"), &dir.path().join("out"));
    assert_eq!(code(&missing), 1);
    let bad_threads = run_with("certify", &config_path("oscillator_certify.json"), &dir.path().join("o"), Some("zero"));
    assert_eq!(code(&bad_threads), 1);
    let usage = Command::new(BIN).arg("simulate").output().unwrap();
    assert_eq!(code(&usage), 1);
}

#[test]
fn order_midpoint_oscillator_passes() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let o = run("order", &config_path("oscillator_order.json"), &out);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = read_json(&out.join("report.json"));
    assert_eq!(report["dl"]["verdict"], "pass");
    assert_eq!(report["flow"]["verdict"], "pass");
    assert!((report["dl"]["fit"]["slope"].as_f64().unwrap() - 3.0).abs() < 0.15);
    assert_eq!(report["flow_not_below_dl"], true);
    let (header, rows) = csv_rows(&out.join("order.csv"));
    assert_eq!(header, ["h", "dl_error", "flow_error"]);
    assert_eq!(column(&header, &rows, "h"), [0.4, 0.2, 0.1, 0.05, 0.025]);
}

#[test]
fn order_rigid_body_exp_passes() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let o = run("order", &config_path("rigid_body_order.json"), &out);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = read_json(&out.join("report.json"));
    assert_eq!(report["dl"]["verdict"], "pass");
    assert_eq!(report["flow"]["verdict"], "pass");
}

#[test]
fn order_with_one_step_cannot_fit() {
    let dir = TempDir::new().unwrap();
    let (o, _) = run_json(
        "order",
        &dir,
        r#"{"system":{"kind":"harmonic_oscillator"},"scheme":{"kind":"midpoint_pair"},"h_grid":[0.1],
            "initial":{"velocity":{"base":[0.6],"fiber":[0.8]}}}"#,
    );
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("at least 3"));
}

#[test]
fn order_outputs_are_reproducible_across_thread_counts() {
    let dir = TempDir::new().unwrap();
    let cfg = config_path("oscillator_order.json");
    let outs: Vec<PathBuf> = ["1", "4"].iter().map(|t| dir.path().join(format!("t{t}"))).collect();
    for (t, out) in ["1", "4"].iter().zip(&outs) {
        assert_eq!(code(&run_with("order", &cfg, out, Some(t))), 0);
    }
    for f in ["order.csv", "report.json"] {
        assert_eq!(fs::read(outs[0].join(f)).unwrap(), fs::read(outs[1].join(f)).unwrap(), "{f}");
    }
}

#[test]
fn exact_matches_oscillator_closed_form() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let o = run("exact", &config_path("oscillator_exact.json"), &out);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = csv_rows(&out.join("exact.csv"));
    let values = column(&header, &rows, "value");
    let h: f64 = 0.2;
    for ((q0, q1), v) in [(0.3, 0.5), (-1.0, 0.8), (0.0, 0.0)].iter().zip(&values) {
        let closed = ((q0 * q0 + q1 * q1) * h.cos() - 2.0 * q0 * q1) / (2.0 * h.sin());
        assert!((v - closed).abs() < 1e-8, "{v} vs {closed}");
    }
    // minus/plus momenta: −∂/∂q0 and ∂/∂q1 of the closed form
    let minus = column(&header, &rows, "minus_0");
    let plus = column(&header, &rows, "plus_0");
    for (i, (q0, q1)) in [(0.3, 0.5), (-1.0, 0.8)].iter().enumerate() {
        assert!((minus[i] + (q0 * h.cos() - q1) / h.sin()).abs() < 1e-8);
        assert!((plus[i] - (q1 * h.cos() - q0) / h.sin()).abs() < 1e-8);
    }
}

#[test]
fn exact_identity_arrow_at_equilibrium() {
    // V = 2 + q²/2 has its equilibrium at 0, where L = −2
    let dir = TempDir::new().unwrap();
    let (o, out) = run_json(
        "exact",
        &dir,
        r#"{"system":{"kind":"quadratic","instance":{"kind":"pair","dim":1},"mass_matrix":[[1]],
                      "potential":[[2,0,0.5]]},
            "h":0.3,"exact":{"arrows":[{"q0":[0],"q1":[0]}]}}"#,
    );
    assert_eq!(code(&o), 0);
    let (header, rows) = csv_rows(&out.join("exact.csv"));
    assert!((column(&header, &rows, "value")[0] + 0.6).abs() < 1e-12);
}

#[test]
fn exact_flags_unreachable_arrow() {
    // at h = π every oscillator trajectory from 0 returns to 0
    let dir = TempDir::new().unwrap();
    let (o, out) = run_json(
        "exact",
        &dir,
        r#"{"system":{"kind":"harmonic_oscillator"},"h":3.141592653589793,
            "exact":{"arrows":[{"q0":[0],"q1":[0.5]},{"q0":[0],"q1":[1]}]}}"#,
    );
    assert_eq!(code(&o), 2);
    let (header, rows) = csv_rows(&out.join("exact.csv"));
    assert_eq!(rows.len(), 2);
    let status = header.iter().position(|h| h == "status").unwrap();
    assert!(rows.iter().all(|r| r[status] == "NoConvergence"), "{rows:?}");
}

#[test]
fn certify_oscillator_box() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    assert_eq!(code(&run("certify", &config_path("oscillator_certify.json"), &out)), 0);
    let cert = read_json(&out.join("certificate.json"));
    assert_eq!(cert["h0"], 2.0);
    assert_eq!(cert["conditions"], serde_json::json!([true, true, true]));
    assert_eq!(cert["unbounded"], false);
}

#[test]
fn certify_free_particle_is_unbounded() {
    let dir = TempDir::new().unwrap();
    let (o, out) = run_json("certify", &dir, r#"{"system":{"kind":"free_particle"},"certify":{"h_max":4.0}}"#);
    assert_eq!(code(&o), 0);
    let cert = read_json(&out.join("certificate.json"));
    assert_eq!(cert["h0"], 4.0);
    assert_eq!(cert["unbounded"], true);
}

#[test]
fn certify_stiff_oscillator_gives_small_step() {
    let dir = TempDir::new().unwrap();
    let (o, out) = run_json(
        "certify",
        &dir,
        r#"{"system":{"kind":"harmonic_oscillator","omega":10},"certify":{"r1":20,"target_radius":0.1}}"#,
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let cert = read_json(&out.join("certificate.json"));
    let (h0, m, t1) = (cert["h0"].as_f64().unwrap(), cert["m"].as_f64().unwrap(), cert["theta1"].as_f64().unwrap());
    // largest grid step with 1.2·100 h²/8 < 1, 100 h²/8 + 0.1 ≤ 1 and 50 h + 0.1/h ≤ 20
    let expected = (1..=10_000)
        .map(|k| k as f64 / 1000.0)
        .filter(|h| 15.0 * h * h < 1.0 && 12.5 * h * h + 0.1 <= 1.0 && 50.0 * h + 0.1 / h <= 20.0)
        .fold(0.0, f64::max);
    assert_eq!(h0, expected);
    assert!((t1 - 1.2 * 100.0).abs() < 1e-6, "{t1}");
    // recompute the three inequalities from the reported constants
    let (r0, r1, r) = (1.0, 20.0, 0.1);
    assert!(t1 * h0 * h0 / 8.0 < 1.0);
    assert!(m * h0 * h0 / 8.0 + r <= r0 * (1.0 + 1e-12));
    assert!(m * h0 / 2.0 + r / h0 <= r1 * (1.0 + 1e-12));
    assert_eq!(cert["conditions"], serde_json::json!([true, true, true]));
    // in the default box, M h0/2 + R/h0 ≤ R1 has no solution for ω = 20
    let (o, _) = run_json("certify", &dir, r#"{"system":{"kind":"harmonic_oscillator","omega":20}}"#);
    assert_eq!(code(&o), 2);
}

#[test]
fn check_oscillator_passes() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let o = run("check", &config_path("oscillator_check.json"), &out);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = read_json(&out.join("check.json"));
    assert_eq!(report["pass"], true);
    assert_eq!(report["checks"]["symplecticity"]["status"], "pass");
    assert_eq!(report["checks"]["reduction"]["status"], "skipped");
}

#[test]
fn check_rigid_body_passes() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let o = run("check", &config_path("rigid_body_check.json"), &out);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read_json(&out.join("check.json"))["checks"]["reduction"]["status"], "pass");
}

#[test]
fn check_thresholds_scale_with_shooting_tolerance() {
    let dir = TempDir::new().unwrap();
    let (o, out) = run_json(
        "check",
        &dir,
        r#"{"system":{"kind":"rigid_body","inertia":[1,2,3]},"h":0.1,"seed":3,
            "tolerances":{"shooting":1e-9},"check":{"random_arrows":6,"probe_radius":1.5}}"#,
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = read_json(&out.join("check.json"));
    assert_eq!(report["threshold_scale"], 1000.0);
    assert_eq!(report["checks"]["hamiltonian_map"]["threshold"], 1e-4);
}

#[test]
fn check_detects_sign_error() {
    let dir = TempDir::new().unwrap();
    let (o, out) = run_json(
        "check",
        &dir,
        r#"{"system":{"kind":"harmonic_oscillator"},"h":0.1,
            "check":{"random_arrows":5,"negate_minus_legendre":true}}"#,
    );
    assert_eq!(code(&o), 2);
    let report = read_json(&out.join("check.json"));
    assert_eq!(report["pass"], false);
    assert_eq!(report["checks"]["hamiltonian_map"]["status"], "fail");
}
