//! Exponential map of the Euler–Lagrange SODE and its inverses, the exact
//! retractions, computed by shooting.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::{flow, groupoid_reconstruction, FlowConfig, LagrangianSystem};
use crate::error::{Error, Result};
use crate::geometry::{AlgebroidVector, GroupoidElement};
use crate::linalg;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JacobianMode {
    /// Forward differences through the flow.
    FiniteDifference,
    /// Chord iteration with `J = h·I`.
    None,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShootingConfig {
    /// Bound on the chart norm of the endpoint mismatch.
    pub residual_tol: f64,
    pub max_newton_iters: usize,
    pub jacobian: JacobianMode,
    /// Initial Newton step length in `(0, 1]`.
    pub damping: f64,
    pub flow: FlowConfig,
}

impl Default for ShootingConfig {
    fn default() -> Self {
        Self {
            residual_tol: 1e-12,
            max_newton_iters: 40,
            jacobian: JacobianMode::FiniteDifference,
            damping: 1.0,
            flow: FlowConfig::default(),
        }
    }
}

/// `exp_h^Γ(a0)`: the arrow traced by the trajectory from `a0` over `[0, h]`.
pub fn exponential_map(sys: &LagrangianSystem, a0: &AlgebroidVector, h: f64, cfg: &FlowConfig) -> Result<GroupoidElement> {
    if h == 0.0 {
        sys.instance().check_vector(a0)?;
        return Ok(sys.instance().identity_at(&a0.base));
    }
    groupoid_reconstruction(sys, a0, h, cfg)
}

/// `R_h^{e−}(g)`: the initial algebroid value of the trajectory connecting
/// the endpoints of `g` in time `h`.
pub fn retraction_minus(sys: &LagrangianSystem, g: &GroupoidElement, h: f64, cfg: &ShootingConfig) -> Result<AlgebroidVector> {
    let inst = sys.instance();
    inst.check_element(g)?;
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidInput(format!("step must be positive, got {h}")));
    }
    if !(cfg.damping > 0.0 && cfg.damping <= 1.0) {
        return Err(Error::InvalidInput("damping must lie in (0, 1]".into()));
    }
    let x0 = inst.source(g);
    let d = inst.fiber_dim();
    let residual = |y: &DVector<f64>| -> Result<DVector<f64>> {
        let a = AlgebroidVector::new(x0.clone(), y.clone());
        inst.fiber_chart(g, &exponential_map(sys, &a, h, &cfg.flow)?)
    };
    let mut y = inst.displacement(g)? / h;
    let mut r = residual(&y)?;
    let mut norm = r.norm();
    for _ in 0..cfg.max_newton_iters {
        if norm <= cfg.residual_tol {
            return Ok(AlgebroidVector::new(x0, y));
        }
        let jac = match cfg.jacobian {
            JacobianMode::FiniteDifference => {
                let s = 1e-6 * (1.0 + y.norm());
                let mut j = DMatrix::zeros(d, d);
                for a in 0..d {
                    let ra = residual(&(&y + linalg::unit(d, a) * s))?;
                    j.set_column(a, &((ra - &r) / s));
                }
                j
            }
            JacobianMode::None => DMatrix::identity(d, d) * h,
        };
        if linalg::condition_number(&jac) > 1e12 {
            return Err(Error::SingularJacobian);
        }
        let delta = linalg::solve(&jac, &(-&r)).ok_or(Error::SingularJacobian)?;
        let mut lambda = cfg.damping;
        let mut accepted = None;
        for _ in 0..=8 {
            let trial = &y + &delta * lambda;
            if let Ok(rt) = residual(&trial) {
                if rt.norm() < norm {
                    accepted = Some((trial, rt));
                    break;
                }
            }
            lambda *= 0.5;
        }
        match accepted {
            Some((yt, rt)) => {
                y = yt;
                r = rt;
                norm = r.norm();
            }
            None => break,
        }
    }
    if norm <= cfg.residual_tol {
        return Ok(AlgebroidVector::new(x0, y));
    }
    Err(Error::NoConvergence { what: "retraction_minus", iterations: cfg.max_newton_iters, residual: norm })
}

/// `R_h^{e+}(g) = Φ_h(R_h^{e−}(g))`.
pub fn retraction_plus(sys: &LagrangianSystem, g: &GroupoidElement, h: f64, cfg: &ShootingConfig) -> Result<AlgebroidVector> {
    let a0 = retraction_minus(sys, g, h, cfg)?;
    flow(sys, &a0, h, &cfg.flow)
}
