//! Order sweeps: discrete Lagrangian against the exact one, and one-step
//! (and fixed-time) evolution against the exact flow.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use super::fit::{fit_loglog, SlopeFit};
use crate::discrete::{evolve, simulate, DiscreteLagrangian, NewtonConfig};
use crate::dynamics::{flow, trajectory, LagrangianSystem};
use crate::error::{Error, Result};
use crate::exact::{exponential_map, gauss_legendre, retraction_minus, ShootingConfig, DEFAULT_QUAD_ORDER};
use crate::geometry::AlgebroidVector;

/// Builds the discrete Lagrangian for a step size.
pub type SchemeFactory<'a> = dyn Fn(f64) -> Result<Arc<dyn DiscreteLagrangian>> + Sync + 'a;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrderConfig {
    pub shooting: ShootingConfig,
    pub newton: NewtonConfig,
    /// Errors below this value are treated as numerically zero and left out
    /// of the fit.
    pub floor: f64,
}

impl OrderConfig {
    pub fn new(shooting: ShootingConfig, newton: NewtonConfig) -> Self {
        Self { floor: 100.0 * shooting.residual_tol, shooting, newton }
    }
}

impl Default for OrderConfig {
    fn default() -> Self {
        Self::new(ShootingConfig::default(), NewtonConfig::default())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    /// `max |L_d(g) − L_h^e(g)|`.
    DlDifference,
    /// One-step distance between the discrete and the exact evolution.
    LocalFlow,
    /// Distance after a fixed time.
    GlobalFlow,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// Every error lies below the floor.
    Exact,
    Pass,
    Fail,
    /// No expected slope was given.
    Measured,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OrderReport {
    pub observable: Observable,
    pub h: Vec<f64>,
    /// `None` where the computation failed.
    pub errors: Vec<Option<f64>>,
    pub failures: Vec<Option<String>>,
    pub floor: f64,
    /// Points below the floor, excluded from the fit.
    pub discarded: usize,
    pub fit: Option<SlopeFit>,
    pub expected_slope: Option<f64>,
    pub band: f64,
    pub verdict: Verdict,
}

impl OrderReport {
    /// Assembles a report from per-step results. Fails with
    /// [`Error::InsufficientPoints`] unless the errors are all below the
    /// floor or at least three usable points remain.
    pub fn assemble(
        observable: Observable,
        h: &[f64],
        results: Vec<Result<f64>>,
        floor: f64,
        expected_slope: Option<f64>,
        band: f64,
    ) -> Result<Self> {
        let errors: Vec<Option<f64>> = results.iter().map(|r| r.as_ref().ok().copied()).collect();
        let failures: Vec<Option<String>> = results.iter().map(|r| r.as_ref().err().map(|e| e.to_string())).collect();
        let measured: Vec<(f64, f64)> = h.iter().zip(&errors).filter_map(|(h, e)| e.map(|e| (*h, e))).collect();
        let usable: Vec<(f64, f64)> = measured.iter().copied().filter(|&(_, e)| e >= floor).collect();
        let discarded = measured.len() - usable.len();
        let (fit, verdict) = if usable.is_empty() && !measured.is_empty() && failures.iter().all(Option::is_none) {
            (None, Verdict::Exact)
        } else {
            let (hs, es): (Vec<f64>, Vec<f64>) = usable.into_iter().unzip();
            let fit = fit_loglog(&hs, &es)?;
            let verdict = match expected_slope {
                None => Verdict::Measured,
                Some(p) if (fit.slope - p).abs() <= band => Verdict::Pass,
                Some(_) => Verdict::Fail,
            };
            (Some(fit), verdict)
        };
        Ok(Self {
            observable,
            h: h.to_vec(),
            errors,
            failures,
            floor,
            discarded,
            fit,
            expected_slope,
            band,
            verdict,
        })
    }

    pub fn slope(&self) -> Option<f64> {
        self.fit.map(|f| f.slope)
    }

    /// Order `r` implied by the slope: `slope − 1` for one-step observables,
    /// the slope itself after a fixed time.
    pub fn measured_order(&self) -> Option<f64> {
        self.slope().map(|s| match self.observable {
            Observable::GlobalFlow => s,
            _ => s - 1.0,
        })
    }
}

fn check_grid(h_grid: &[f64], probes: &[AlgebroidVector]) -> Result<()> {
    if probes.is_empty() {
        return Err(Error::InvalidInput("at least one probe is required".into()));
    }
    if let Some(h) = h_grid.iter().find(|h| !(**h > 0.0) || !h.is_finite()) {
        return Err(Error::InvalidInput(format!("step sizes must be positive, got {h}")));
    }
    Ok(())
}

/// Action of the continuous trajectory from `a0` over `[0, h]`, which is
/// `L_h^e(exp_h(a0))` whenever the connecting trajectory is unique.
fn exact_action_from(sys: &LagrangianSystem, a0: &AlgebroidVector, h: f64, cfg: &ShootingConfig) -> Result<f64> {
    let traj = trajectory(sys, a0, h, &cfg.flow)?;
    let (x, w) = gauss_legendre(DEFAULT_QUAD_ORDER);
    let sum: f64 = x.iter().zip(&w).map(|(x, w)| w * sys.value(&traj.sample(0.5 * h * (1.0 + x)))).sum();
    Ok(0.5 * h * sum)
}

fn max_over<F: Fn(&AlgebroidVector) -> Result<f64>>(probes: &[AlgebroidVector], f: F) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for a0 in probes {
        worst = worst.max(f(a0)?);
    }
    Ok(worst)
}

/// `error(h) = max_probes |L_d(g) − L_h^e(g)|` with `g = exp_h(a0)`; the
/// expected slope is `r + 1`.
pub fn dl_order(
    factory: &SchemeFactory,
    sys: &LagrangianSystem,
    probes: &[AlgebroidVector],
    h_grid: &[f64],
    cfg: &OrderConfig,
    expected_slope: Option<f64>,
    band: f64,
) -> Result<OrderReport> {
    check_grid(h_grid, probes)?;
    let results: Vec<Result<f64>> = h_grid
        .par_iter()
        .map(|&h| {
            let ld = factory(h)?;
            max_over(probes, |a0| {
                let g = exponential_map(sys, a0, h, &cfg.shooting.flow)?;
                Ok((ld.eval(&g)? - exact_action_from(sys, a0, h, &cfg.shooting)?).abs())
            })
        })
        .collect();
    OrderReport::assemble(Observable::DlDifference, h_grid, results, cfg.floor, expected_slope, band)
}

/// One-step error of the evolution operator conjugated by the exact
/// retraction: `‖R_h^{e−}(evolve(L_d, exp_h(a0))) − Φ_h(a0)‖`, where
/// `Φ_h(a0) = R_h^{e−}(exp_h(Φ_h(a0)))` is the exact image. The expected
/// slope is `r + 1`. Arrow coordinates carry an extra factor `h` relative to
/// velocities, so the same error measured on arrows scales one power higher.
pub fn flow_order(
    factory: &SchemeFactory,
    sys: &LagrangianSystem,
    probes: &[AlgebroidVector],
    h_grid: &[f64],
    cfg: &OrderConfig,
    expected_slope: Option<f64>,
    band: f64,
) -> Result<OrderReport> {
    check_grid(h_grid, probes)?;
    let results: Vec<Result<f64>> = h_grid
        .par_iter()
        .map(|&h| {
            let ld = factory(h)?;
            max_over(probes, |a0| {
                let g = exponential_map(sys, a0, h, &cfg.shooting.flow)?;
                let next = evolve(&*ld, &g, &cfg.newton)?;
                let a1 = flow(sys, a0, h, &cfg.shooting.flow)?;
                let computed = retraction_minus(sys, &next, h, &cfg.shooting)?;
                Ok((computed.coords() - a1.coords()).norm())
            })
        })
        .collect();
    OrderReport::assemble(Observable::LocalFlow, h_grid, results, cfg.floor, expected_slope, band)
}

/// Error of the arrow covering `[T − h, T]`, `T = round(t_final/h)·h`, after
/// iterating the discrete evolution from `exp_h(a0)`; the expected slope is `r`.
#[allow(clippy::too_many_arguments)]
pub fn global_order(
    factory: &SchemeFactory,
    sys: &LagrangianSystem,
    probes: &[AlgebroidVector],
    h_grid: &[f64],
    t_final: f64,
    cfg: &OrderConfig,
    expected_slope: Option<f64>,
    band: f64,
) -> Result<OrderReport> {
    check_grid(h_grid, probes)?;
    let inst = sys.instance();
    let results: Vec<Result<f64>> = h_grid
        .par_iter()
        .map(|&h| {
            let ld = factory(h)?;
            let steps = ((t_final / h).round() as usize).max(1);
            max_over(probes, |a0| {
                let g = exponential_map(sys, a0, h, &cfg.shooting.flow)?;
                let rec = simulate(&*ld, &g, steps - 1, &cfg.newton, None);
                if let Some(e) = rec.failure {
                    return Err(e);
                }
                let last = rec.arrows.last().expect("simulate keeps the initial arrow");
                let start = if steps > 1 { flow(sys, a0, (steps - 1) as f64 * h, &cfg.shooting.flow)? } else { a0.clone() };
                let exact = exponential_map(sys, &start, h, &cfg.shooting.flow)?;
                Ok(inst.chart_coords(&exact, last)?.norm())
            })
        })
        .collect();
    OrderReport::assemble(Observable::GlobalFlow, h_grid, results, cfg.floor, expected_slope, band)
}
