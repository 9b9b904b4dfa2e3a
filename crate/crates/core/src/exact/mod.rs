//! Exact discrete mechanics: the exact retractions obtained by inverting the
//! SODE exponential map, the exact discrete Lagrangian (action along the
//! connecting trajectory), its discrete Legendre transforms, and a sampled
//! certificate for the step size below which shooting is well posed.

mod certify;
mod quadrature;
mod shooting;

use crate::discrete::DiscreteLagrangian;
use crate::dynamics::{traced_trajectory, LagrangianSystem};
use crate::error::{Error, Result};
use crate::geometry::{GroupoidElement, Instance, Momentum};

pub use certify::{certify_h0, CertifyConfig, ConvexityCertificate};
pub use quadrature::gauss_legendre;
pub use shooting::{exponential_map, retraction_minus, retraction_plus, JacobianMode, ShootingConfig};

pub const DEFAULT_QUAD_ORDER: usize = 10;

/// `L_h^e(g) = ∫_0^h L(Φ_t(R_h^{e−}(g))) dt` with an `quad_order`-point
/// Gauss–Legendre rule on the dense output of one flow solve.
pub fn exact_discrete_lagrangian(
    sys: &LagrangianSystem,
    g: &GroupoidElement,
    h: f64,
    cfg: &ShootingConfig,
    quad_order: usize,
) -> Result<f64> {
    if quad_order == 0 {
        return Err(Error::InvalidInput("quadrature order must be positive".into()));
    }
    let a0 = retraction_minus(sys, g, h, cfg)?;
    let (traj, end) = traced_trajectory(sys, &a0, h, &cfg.flow)?;
    let (x, w) = gauss_legendre(quad_order);
    let sum: f64 = x.iter().zip(&w).map(|(x, w)| w * sys.value(&traj.sample(0.5 * h * (1.0 + x)))).sum();
    // the shooting stops with g = end · δ(c), |c| ≤ tol; moving the target by c
    // changes the action by ⟨F⁺, c⟩ to first order
    let mismatch = sys.instance().fiber_chart(&end, g)?;
    let plus = sys.legendre(&traj.final_state())?;
    Ok(0.5 * h * sum + plus.fiber.dot(&mismatch))
}

/// `F⁻L_h^e = FL ∘ R_h^{e−}`.
pub fn exact_dlegendre_minus(sys: &LagrangianSystem, g: &GroupoidElement, h: f64, cfg: &ShootingConfig) -> Result<Momentum> {
    sys.legendre(&retraction_minus(sys, g, h, cfg)?)
}

/// `F⁺L_h^e = FL ∘ R_h^{e+}`.
pub fn exact_dlegendre_plus(sys: &LagrangianSystem, g: &GroupoidElement, h: f64, cfg: &ShootingConfig) -> Result<Momentum> {
    sys.legendre(&retraction_plus(sys, g, h, cfg)?)
}

/// The exact discrete Lagrangian as a [`DiscreteLagrangian`]; its Legendre
/// transforms are the closed forms above.
#[derive(Clone, Debug)]
pub struct ExactDiscreteLagrangian {
    sys: LagrangianSystem,
    h: f64,
    cfg: ShootingConfig,
    quad_order: usize,
}

impl ExactDiscreteLagrangian {
    pub fn new(sys: LagrangianSystem, h: f64, cfg: ShootingConfig) -> Self {
        Self { sys, h, cfg, quad_order: DEFAULT_QUAD_ORDER }
    }

    pub fn with_quad_order(mut self, quad_order: usize) -> Self {
        self.quad_order = quad_order;
        self
    }

    pub fn system(&self) -> &LagrangianSystem {
        &self.sys
    }

    pub fn config(&self) -> &ShootingConfig {
        &self.cfg
    }
}

impl DiscreteLagrangian for ExactDiscreteLagrangian {
    fn instance(&self) -> &Instance {
        self.sys.instance()
    }

    fn step(&self) -> f64 {
        self.h
    }

    fn eval(&self, g: &GroupoidElement) -> Result<f64> {
        exact_discrete_lagrangian(&self.sys, g, self.h, &self.cfg, self.quad_order)
    }

    fn legendre_plus(&self, g: &GroupoidElement) -> Option<Result<Momentum>> {
        Some(exact_dlegendre_plus(&self.sys, g, self.h, &self.cfg))
    }

    fn legendre_minus(&self, g: &GroupoidElement) -> Option<Result<Momentum>> {
        Some(exact_dlegendre_minus(&self.sys, g, self.h, &self.cfg))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discrete::{fd_dlegendre_minus, fd_dlegendre_plus, regularity_matrix};
    use crate::dynamics::FlowConfig;

    fn tight() -> ShootingConfig {
        ShootingConfig { flow: FlowConfig::with_tol(1e-11), ..ShootingConfig::default() }
    }

    /// Action of the exact oscillator solution, by hand.
    fn oscillator_action(q0: f64, q1: f64, h: f64) -> f64 {
        ((q0 * q0 + q1 * q1) * h.cos() - 2.0 * q0 * q1) / (2.0 * h.sin())
    }

    #[test]
    fn oscillator_exact_action() {
        let ho = LagrangianSystem::harmonic_oscillator(1, 1.0);
        for &(q0, q1, h) in &[(0.0, 1.0, 0.5), (0.3, -0.2, 0.1), (-1.0, 0.9, 0.2)] {
            let l = exact_discrete_lagrangian(&ho, &GroupoidElement::pair(&[q0], &[q1]), h, &tight(), 10).unwrap();
            assert!((l - oscillator_action(q0, q1, h)).abs() < 1e-9, "{l}");
        }
        let l = exact_discrete_lagrangian(&ho, &GroupoidElement::pair(&[0.0], &[1.0]), 0.5, &tight(), 10).unwrap();
        assert!((l - 0.5f64.cos() / (2.0 * 0.5f64.sin())).abs() < 1e-9);
    }

    #[test]
    fn quadrature_order_doubling_is_stable() {
        let ho = LagrangianSystem::harmonic_oscillator(2, 1.3);
        let g = GroupoidElement::pair(&[0.2, -0.3], &[0.5, 0.1]);
        let a = exact_discrete_lagrangian(&ho, &g, 0.3, &tight(), 10).unwrap();
        let b = exact_discrete_lagrangian(&ho, &g, 0.3, &tight(), 20).unwrap();
        assert!((a - b).abs() < 1e-11);
    }

    #[test]
    fn free_particle_and_equilibrium() {
        let fp = LagrangianSystem::free_particle(2);
        let l = exact_discrete_lagrangian(&fp, &GroupoidElement::pair(&[0.0, 1.0], &[1.0, 3.0]), 0.25, &tight(), 10).unwrap();
        assert!((l - 5.0 / 0.5).abs() < 1e-10);
        let ho = LagrangianSystem::harmonic_oscillator(1, 1.0);
        let l = exact_discrete_lagrangian(&ho, &GroupoidElement::pair(&[0.0], &[0.0]), 0.25, &tight(), 10).unwrap();
        assert_eq!(l, 0.0);
    }

    #[test]
    fn oscillator_exact_legendre() {
        let ho = LagrangianSystem::harmonic_oscillator(1, 1.0);
        let (q0, q1, h): (f64, f64, f64) = (0.4, -0.1, 0.2);
        let g = GroupoidElement::pair(&[q0], &[q1]);
        let minus = exact_dlegendre_minus(&ho, &g, h, &tight()).unwrap();
        let plus = exact_dlegendre_plus(&ho, &g, h, &tight()).unwrap();
        // −∂/∂q0 and ∂/∂q1 of the closed-form action
        assert!((minus.fiber[0] - (q1 - q0 * h.cos()) / h.sin()).abs() < 1e-9);
        assert!((plus.fiber[0] - (q1 * h.cos() - q0) / h.sin()).abs() < 1e-9);
        let ld = ExactDiscreteLagrangian::new(ho, h, tight());
        assert!((fd_dlegendre_minus(&ld, &g).unwrap().fiber - minus.fiber).norm() < 1e-6);
        assert!((fd_dlegendre_plus(&ld, &g).unwrap().fiber - plus.fiber).norm() < 1e-6);
        let reg = regularity_matrix(&ld, &g).unwrap();
        assert!((reg.matrix[(0, 0)] - 1.0 / h.sin()).abs() < 1e-5);
    }
}
