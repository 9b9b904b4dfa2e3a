//! The five commands. Each writes its outputs before reporting a numerical
//! failure, so partial results stay on disk.

use std::path::Path;
use std::sync::Arc;

use gvi_core::discrete::{dlegendre_plus, simulate, DiscreteLagrangian};
use gvi_core::dynamics::{hamiltonian_flow, LagrangianSystem};
use gvi_core::errorlab::{
    dl_order, flow_order, global_order, legendre_consistency_check, psi_reduction_check, symplecticity_defect,
    OrderConfig, OrderReport, Verdict,
};
use gvi_core::exact::{
    certify_h0, exact_discrete_lagrangian, exact_dlegendre_minus, exact_dlegendre_plus, exponential_map, CertifyConfig,
    ShootingConfig, DEFAULT_QUAD_ORDER,
};
use gvi_core::geometry::{AlgebroidVector, GroupoidElement, Instance, Momentum};
use gvi_core::schemes::{build_scheme, SchemeKind, SchemeSpec};
use gvi_core::Error;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::{ExperimentConfig, InitialData};
use crate::output::{columns, num, opt_num, write_json, Csv};
use crate::{classify, CliError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Order,
    Exact,
    Certify,
    Check,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Order => "order",
            Command::Exact => "exact",
            Command::Certify => "certify",
            Command::Check => "check",
        }
    }
}

pub fn dispatch(command: Command, cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    match command {
        Command::Simulate => cmd_simulate(cfg, out),
        Command::Order => cmd_order(cfg, out),
        Command::Exact => cmd_exact(cfg, out),
        Command::Certify => cmd_certify(cfg, out),
        Command::Check => cmd_check(cfg, out),
    }
}

/// Variant name of a library error, used as a row status.
fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::NotComposable { .. } => "NotComposable",
        Error::SingularMatrix(_) => "SingularMatrix",
        Error::OutOfBranch(_) => "OutOfBranch",
        Error::SingularHessian { .. } => "SingularHessian",
        Error::NoConvergence { .. } => "NoConvergence",
        Error::SingularJacobian => "SingularJacobian",
        Error::SingularRegularityMatrix { .. } => "SingularRegularityMatrix",
        Error::SingularTau => "SingularTau",
        Error::StepFailure { .. } => "StepFailure",
        Error::EmptyCertificate => "EmptyCertificate",
        Error::InsufficientPoints { .. } => "InsufficientPoints",
        Error::InstanceMismatch(_) => "InstanceMismatch",
        Error::InvalidInstance(_) => "InvalidInstance",
        Error::InvalidInput(_) => "InvalidInput",
    }
}

fn numerical(e: Error) -> CliError {
    CliError::Numerical(e.to_string())
}

fn scheme(cfg: &ExperimentConfig, sys: &LagrangianSystem, h: f64) -> Result<Arc<dyn DiscreteLagrangian>, CliError> {
    build_scheme(cfg.require_scheme()?, sys, h, &cfg.tolerances.shooting()).map_err(classify)
}

/// First arrow: the configured one, or `exp_h(a0)`.
fn initial_arrow(cfg: &ExperimentConfig, sys: &LagrangianSystem, h: f64) -> Result<GroupoidElement, CliError> {
    match cfg.require_initial()? {
        InitialData::Arrow(a) => a.build(sys.instance()),
        InitialData::Velocity(v) => {
            let a0 = v.build(sys.instance())?;
            exponential_map(sys, &a0, h, &cfg.tolerances.flow()).map_err(numerical)
        }
    }
}

fn zero_momentum(inst: &Instance) -> Momentum {
    Momentum::new(DVector::zeros(inst.base_dim()), DVector::zeros(inst.fiber_dim()))
}

fn cmd_simulate(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let sys = cfg.system.build()?;
    let inst = sys.instance();
    let h = cfg.require_h()?;
    let steps = cfg.steps.ok_or_else(|| CliError::Config("`steps` is required".into()))?;
    let ld = scheme(cfg, &sys, h)?;
    let has_casimir = inst.casimir(&zero_momentum(inst)).is_some();

    let mut header = vec!["step".to_string(), "time".to_string()];
    header.extend(columns("source", inst.base_dim()));
    header.extend(columns("chart", inst.fiber_dim()));
    header.extend(columns("momentum", inst.fiber_dim()));
    header.push("energy".into());
    if has_casimir {
        header.push("casimir".into());
    }
    let mut csv = Csv::new(&header);

    // no steps requested: nothing is evolved and only the header is written
    let (rec, failure) = if steps == 0 {
        (None, None)
    } else {
        let g0 = initial_arrow(cfg, &sys, h)?;
        let rec = simulate(&*ld, &g0, steps, &cfg.tolerances.newton(), Some(&sys));
        let failure = rec.failure.clone();
        (Some(rec), failure)
    };
    let mut summary = json!({
        "command": "simulate",
        "instance": inst.name(),
        "scheme": cfg.scheme,
        "h": h,
        "steps_requested": steps,
    });
    if let Some(rec) = &rec {
        for (k, g) in rec.arrows.iter().enumerate() {
            let chart = inst.displacement(g).map_err(numerical)?;
            let mut row = vec![k.to_string(), num(k as f64 * h)];
            row.extend(inst.source(g).iter().map(|x| num(*x)));
            row.extend(chart.iter().map(|x| num(*x)));
            row.extend(rec.momenta[k].fiber.iter().map(|x| num(*x)));
            row.push(opt_num(rec.energies[k]));
            if has_casimir {
                row.push(opt_num(rec.casimirs[k]));
            }
            csv.row(row);
        }
        let energies: Vec<f64> = rec.energies.iter().flatten().copied().collect();
        let casimirs: Vec<f64> = rec.casimirs.iter().flatten().copied().collect();
        let drift = |s: &[f64]| s.first().map(|&e0| s.iter().map(|e| (e - e0).abs()).fold(0.0, f64::max));
        summary["steps_completed"] = json!(rec.arrows.len().saturating_sub(1));
        summary["energy_drift"] = json!(drift(&energies));
        summary["casimir_drift"] = json!(drift(&casimirs));
    } else {
        summary["steps_completed"] = json!(0);
    }
    summary["failure"] = json!(failure.as_ref().map(|e| e.to_string()));
    csv.write(&out.join("trajectory.csv"))?;
    write_json(&out.join("summary.json"), &summary)?;
    match failure {
        Some(e) => Err(numerical(e)),
        None => Ok(()),
    }
}

fn order_probes(cfg: &ExperimentConfig, inst: &Instance) -> Result<Vec<AlgebroidVector>, CliError> {
    if !cfg.order.probes.is_empty() {
        return cfg.order.probes.iter().map(|p| p.build(inst)).collect();
    }
    match &cfg.initial {
        Some(InitialData::Velocity(v)) => Ok(vec![v.build(inst)?]),
        _ => Err(CliError::Config("order needs `order.probes` or an initial velocity".into())),
    }
}

#[derive(Serialize)]
struct OrderSummary<'a> {
    scheme: &'a SchemeSpec,
    expected_order: Option<u32>,
    dl: &'a OrderReport,
    flow: &'a OrderReport,
    global: Option<&'a OrderReport>,
    /// Flow slope is not below the DL slope within the fit intervals.
    flow_not_below_dl: Option<bool>,
    note: &'static str,
}

fn cmd_order(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let sys = cfg.system.build()?;
    let spec = cfg.require_scheme()?;
    let grid = cfg.h_grid.clone().ok_or_else(|| CliError::Config("`h_grid` is required".into()))?;
    let probes = order_probes(cfg, sys.instance())?;
    let ocfg = OrderConfig::new(cfg.tolerances.shooting(), cfg.tolerances.newton());
    let shooting = ocfg.shooting;
    let factory = |h: f64| build_scheme(spec, &sys, h, &shooting);
    // surface configuration problems before the sweep
    factory(grid[0]).map_err(classify)?;

    let order = spec.order();
    let one_step = order.map(|r| r as f64 + 1.0);
    let dl_band = cfg.order.dl_band.unwrap_or(0.15);
    let flow_band = cfg.order.flow_band.unwrap_or(0.2);
    let dl = dl_order(&factory, &sys, &probes, &grid, &ocfg, one_step, dl_band).map_err(numerical)?;
    let flow = flow_order(&factory, &sys, &probes, &grid, &ocfg, one_step, flow_band).map_err(numerical)?;
    let global = match cfg.order.global_time {
        Some(t) => Some(
            global_order(&factory, &sys, &probes, &grid, t, &ocfg, order.map(f64::from), flow_band)
                .map_err(numerical)?,
        ),
        None => None,
    };

    let mut header = vec!["h", "dl_error", "flow_error"];
    if global.is_some() {
        header.push("global_error");
    }
    let mut csv = Csv::new(&header);
    for (i, h) in grid.iter().enumerate() {
        let mut row = vec![num(*h), opt_num(dl.errors[i]), opt_num(flow.errors[i])];
        if let Some(g) = &global {
            row.push(opt_num(g.errors[i]));
        }
        csv.row(row);
    }
    let flow_not_below_dl = match (dl.fit, flow.fit) {
        (Some(d), Some(f)) => Some(f.high() >= d.low()),
        _ => None,
    };
    let summary = OrderSummary {
        scheme: spec,
        expected_order: order,
        dl: &dl,
        flow: &flow,
        global: global.as_ref(),
        flow_not_below_dl,
        note: "verifies the power-law scaling of the errors only; smoothness of the error term is not certified",
    };
    csv.write(&out.join("order.csv"))?;
    write_json(&out.join("report.json"), &summary)?;
    let failed: Vec<&str> = [Some(&dl), Some(&flow), global.as_ref()]
        .into_iter()
        .flatten()
        .filter(|r| r.verdict == Verdict::Fail)
        .map(|r| match r.observable {
            gvi_core::errorlab::Observable::DlDifference => "dl_difference",
            gvi_core::errorlab::Observable::LocalFlow => "local_flow",
            gvi_core::errorlab::Observable::GlobalFlow => "global_flow",
        })
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Numerical(format!("slope outside the band for {}", failed.join(", "))))
    }
}

fn exact_arrows(cfg: &ExperimentConfig, sys: &LagrangianSystem, h: f64) -> Result<Vec<GroupoidElement>, CliError> {
    if cfg.exact.arrows.is_empty() {
        return Ok(vec![initial_arrow(cfg, sys, h)?]);
    }
    cfg.exact.arrows.iter().map(|a| a.build(sys.instance())).collect()
}

fn cmd_exact(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let sys = cfg.system.build()?;
    let inst = sys.instance();
    let h = cfg.require_h()?;
    let arrows = exact_arrows(cfg, &sys, h)?;
    let quad = cfg.exact.quad_order.unwrap_or(DEFAULT_QUAD_ORDER);
    if quad == 0 {
        return Err(CliError::Config("`exact.quad_order` must be positive".into()));
    }
    let shooting = cfg.tolerances.shooting();
    let rows: Vec<Result<(f64, Momentum, Momentum), Error>> = arrows
        .par_iter()
        .map(|g| {
            Ok((
                exact_discrete_lagrangian(&sys, g, h, &shooting, quad)?,
                exact_dlegendre_minus(&sys, g, h, &shooting)?,
                exact_dlegendre_plus(&sys, g, h, &shooting)?,
            ))
        })
        .collect();

    let d = inst.fiber_dim();
    let mut header = vec!["arrow".to_string(), "status".to_string(), "value".to_string()];
    header.extend(columns("minus", d));
    header.extend(columns("plus", d));
    let mut csv = Csv::new(&header);
    let mut failed = Vec::new();
    for (i, r) in rows.iter().enumerate() {
        let mut row = vec![i.to_string()];
        match r {
            Ok((value, minus, plus)) => {
                row.push("ok".into());
                row.push(num(*value));
                row.extend(minus.fiber.iter().chain(plus.fiber.iter()).map(|x| num(*x)));
            }
            Err(e) => {
                row.push(error_kind(e).into());
                row.extend(std::iter::repeat_n(num(f64::NAN), 1 + 2 * d));
                failed.push(format!("arrow {i}: {e}"));
            }
        }
        csv.row(row);
    }
    csv.write(&out.join("exact.csv"))?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Numerical(failed.join("; ")))
    }
}

fn cmd_certify(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let sys = cfg.system.build()?;
    let b = &cfg.certify;
    let ccfg = CertifyConfig {
        r0: b.r0,
        r1: b.r1,
        target_radius: b.target_radius,
        samples: b.samples,
        h_max: b.h_max,
        seed: cfg.seed,
        center: b.center.as_ref().map(|c| DVector::from_row_slice(c)),
    };
    let cert = certify_h0(&sys, &ccfg).map_err(classify)?;
    write_json(&out.join("certificate.json"), &cert)
}

#[derive(Serialize)]
struct CheckResult {
    status: &'static str,
    max: Option<f64>,
    threshold: Option<f64>,
    values: Vec<f64>,
    reason: Option<String>,
}

impl CheckResult {
    fn measured(values: Vec<f64>, threshold: f64) -> Self {
        let max = values.iter().copied().fold(0.0, f64::max);
        let ok = values.iter().all(|v| *v <= threshold);
        Self { status: if ok { "pass" } else { "fail" }, max: Some(max), threshold: Some(threshold), values, reason: None }
    }

    fn skipped(reason: &str) -> Self {
        Self { status: "skipped", max: None, threshold: None, values: Vec::new(), reason: Some(reason.into()) }
    }

    fn failed(e: Error) -> Self {
        Self { status: "error", max: None, threshold: None, values: Vec::new(), reason: Some(e.to_string()) }
    }

    fn passed(&self) -> bool {
        matches!(self.status, "pass" | "skipped")
    }
}

/// Random `a0` in the ball of radius `r` (uniform per component, then
/// clipped to the ball).
fn sample_velocity(rng: &mut ChaCha8Rng, inst: &Instance, r: f64) -> AlgebroidVector {
    let mut draw = |n: usize| {
        let v = DVector::from_fn(n, |_, _| rng.random_range(-r..=r));
        let norm = v.norm();
        if norm > r {
            v * (r / norm)
        } else {
            v
        }
    };
    let base = draw(inst.base_dim());
    let fiber = draw(inst.fiber_dim());
    AlgebroidVector::new(base, fiber)
}

/// `‖F⁺L_h^e(g) − Φ_h^{X_H}(s·F⁻L_h^e(g))‖` with `s = ±1`.
fn hamiltonian_map_defects(
    sys: &LagrangianSystem,
    arrows: &[GroupoidElement],
    h: f64,
    cfg: &ShootingConfig,
    sign: f64,
) -> Result<Vec<f64>, Error> {
    arrows
        .par_iter()
        .map(|g| {
            let plus = exact_dlegendre_plus(sys, g, h, cfg)?;
            let minus = exact_dlegendre_minus(sys, g, h, cfg)?;
            let minus = Momentum::new(minus.base, minus.fiber * sign);
            Ok(plus.distance(&hamiltonian_flow(sys, &minus, h, &cfg.flow)?))
        })
        .collect()
}

fn cmd_check(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    let sys = cfg.system.build()?;
    let inst = sys.instance();
    let h = cfg.require_h()?;
    let b = &cfg.check;
    let shooting = cfg.tolerances.shooting();
    let flow_cfg = cfg.tolerances.flow();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let arrows: Vec<GroupoidElement> = if b.arrows.is_empty() {
        if b.random_arrows == 0 || !(b.probe_radius > 0.0) {
            return Err(CliError::Config("check needs arrows or a positive random_arrows and probe_radius".into()));
        }
        let probes: Vec<AlgebroidVector> =
            (0..b.random_arrows).map(|_| sample_velocity(&mut rng, inst, b.probe_radius)).collect();
        probes
            .par_iter()
            .map(|a0| exponential_map(&sys, a0, h, &flow_cfg))
            .collect::<Result<_, _>>()
            .map_err(numerical)?
    } else {
        b.arrows.iter().map(|a| a.build(inst)).collect::<Result<_, _>>()?
    };

    // defects of shooting-based quantities grow with the shooting tolerance
    let scale = (shooting.residual_tol / 1e-12).max(1.0);
    let hamiltonian_threshold = b
        .hamiltonian_map_threshold
        .unwrap_or(if matches!(inst, Instance::PairEuclidean(_)) { 1e-8 } else { 1e-7 })
        * scale;
    let sign = if b.negate_minus_legendre { -1.0 } else { 1.0 };
    let hamiltonian = match hamiltonian_map_defects(&sys, &arrows, h, &shooting, sign) {
        Ok(v) => CheckResult::measured(v, hamiltonian_threshold),
        Err(e) => CheckResult::failed(e),
    };

    let (legendre, legendre_fd) = match legendre_consistency_check(&sys, &arrows, h, &shooting) {
        Ok(c) => (
            CheckResult::measured(c.closed_form.values, b.legendre_threshold * scale),
            CheckResult::measured(c.finite_difference.values, b.legendre_fd_threshold * scale),
        ),
        Err(e) => (CheckResult::failed(e.clone()), CheckResult::failed(e)),
    };

    let reduction = match inst {
        Instance::MatrixGroup(group) => {
            let pairs: Vec<(DMatrix<f64>, DMatrix<f64>)> = arrows
                .iter()
                .filter_map(|g| g.group_part().cloned())
                .map(|rel| {
                    let g0 = group.exp(&sample_velocity(&mut rng, inst, 1.0).fiber);
                    let g1 = &g0 * rel;
                    (g0, g1)
                })
                .collect();
            match psi_reduction_check(&sys, &pairs, h, &shooting) {
                Ok(r) => {
                    let values = r.value.values.iter().zip(&r.momentum.values).map(|(a, b)| a.max(*b)).collect();
                    CheckResult::measured(values, b.reduction_threshold * scale)
                }
                Err(e) => CheckResult::failed(e),
            }
        }
        _ => CheckResult::skipped("left-trivialization applies to matrix group instances"),
    };

    let symplecticity = match inst {
        Instance::PairEuclidean(_) => {
            let spec = cfg.scheme.clone().unwrap_or_else(|| SchemeSpec::new(SchemeKind::MidpointPair));
            let ld = build_scheme(&spec, &sys, h, &shooting).map_err(classify)?;
            let newton = cfg.tolerances.newton();
            let defects: Result<Vec<f64>, Error> = arrows
                .par_iter()
                .map(|g| symplecticity_defect(&*ld, &dlegendre_plus(&*ld, g)?, 1e-5, &newton))
                .collect();
            match defects {
                Ok(v) => CheckResult::measured(v, b.symplectic_threshold),
                Err(e) => CheckResult::failed(e),
            }
        }
        _ => CheckResult::skipped("canonical symplectic form is checked on pair instances"),
    };

    let all_passed = [&hamiltonian, &legendre, &legendre_fd, &reduction, &symplecticity].iter().all(|c| c.passed());
    let report = json!({
        "instance": inst.name(),
        "h": h,
        "arrows": arrows.len(),
        "threshold_scale": scale,
        "negate_minus_legendre": b.negate_minus_legendre,
        "checks": {
            "hamiltonian_map": hamiltonian,
            "legendre_closed_form": legendre,
            "legendre_finite_difference": legendre_fd,
            "reduction": reduction,
            "symplecticity": symplecticity,
        },
        "pass": all_passed,
    });
    write_json(&out.join("check.json"), &report)?;
    if all_passed {
        Ok(())
    } else {
        Err(CliError::Numerical("identity checks failed, see check.json".into()))
    }
}
