use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::lagrangian::{Derivatives, Lagrangian, QuadraticLagrangian, SeparablePolynomial};
use crate::error::{Error, Result};
use crate::geometry::{AlgebroidVector, Instance, MatrixGroup, Momentum};
use crate::linalg;

/// Fiber Hessians with a larger condition number are treated as singular.
pub const HESSIAN_CONDITION_LIMIT: f64 = 1e8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GradientMode {
    /// Central differences; `None` picks `ε^{1/3}(1+‖y‖)` for first and
    /// `ε^{1/4}(1+‖y‖)` for second derivatives.
    FiniteDifference(Option<f64>),
    /// Use [`Lagrangian::derivatives`], falling back to finite differences
    /// when the Lagrangian does not provide them.
    Analytic,
}

/// A regular Lagrangian bound to an instance.
#[derive(Clone, Debug)]
pub struct LagrangianSystem {
    instance: Instance,
    lagrangian: Arc<dyn Lagrangian>,
    mode: GradientMode,
}

impl LagrangianSystem {
    pub fn new(instance: Instance, lagrangian: Arc<dyn Lagrangian>, mode: GradientMode) -> Self {
        Self { instance, lagrangian, mode }
    }

    /// `L = ½|v|² − ½ω²|q|²` on the pair groupoid of Rⁿ.
    pub fn harmonic_oscillator(n: usize, omega: f64) -> Self {
        let l = QuadraticLagrangian::new(DMatrix::identity(n, n), SeparablePolynomial::isotropic_quadratic(n, omega * omega))
            .expect("identity mass");
        Self::new(Instance::pair(n), Arc::new(l), GradientMode::Analytic)
    }

    pub fn free_particle(n: usize) -> Self {
        let l = QuadraticLagrangian::new(DMatrix::identity(n, n), SeparablePolynomial::zero(n)).expect("identity mass");
        Self::new(Instance::pair(n), Arc::new(l), GradientMode::Analytic)
    }

    /// Free rigid body `l(ξ) = ½ ξᵀ diag(I) ξ` on so(3).
    pub fn rigid_body(inertia: [f64; 3]) -> Result<Self> {
        if inertia.iter().any(|&i| !(i > 0.0) || !i.is_finite()) {
            return Err(Error::InvalidInput("principal moments must be positive".into()));
        }
        let l = QuadraticLagrangian::new(
            DMatrix::from_diagonal(&DVector::from_row_slice(&inertia)),
            SeparablePolynomial::zero(0),
        )?;
        Ok(Self::new(Instance::so3(), Arc::new(l), GradientMode::Analytic))
    }

    /// Rigid body coupled to a particle in Rᵐ on the trivial bundle
    /// `SO(3) × Rᵐ`:
    ///
    /// `l(ξ, x, ẋ) = ½ ξᵀIξ + ½ m|ẋ|² + κ Σ_{i<min(3,m)} ξ_i ẋ_i − ½ m g |x|²`
    pub fn heavy_top_trivial_bundle(inertia: [f64; 3], mass: f64, gravity: f64, coupling: f64, base_dim: usize) -> Result<Self> {
        if inertia.iter().any(|&i| !(i > 0.0)) || !(mass > 0.0) || base_dim == 0 {
            return Err(Error::InvalidInput("heavy top needs positive inertia, mass and base dimension".into()));
        }
        let d = 3 + base_dim;
        let mut m = DMatrix::zeros(d, d);
        for i in 0..3 {
            m[(i, i)] = inertia[i];
        }
        for i in 0..base_dim {
            m[(3 + i, 3 + i)] = mass;
        }
        for i in 0..base_dim.min(3) {
            m[(i, 3 + i)] = coupling;
            m[(3 + i, i)] = coupling;
        }
        let l = QuadraticLagrangian::new(m, SeparablePolynomial::isotropic_quadratic(base_dim, mass * gravity))?;
        let sys = Self::new(Instance::bundle(MatrixGroup::so3(), base_dim), Arc::new(l), GradientMode::Analytic);
        let probe = AlgebroidVector::new(DVector::zeros(base_dim), DVector::zeros(d));
        sys.derivatives(&probe.base, &probe.fiber).and_then(|dv| sys.check_hessian(&dv.dyy))?;
        Ok(sys)
    }

    pub fn instance(&self) -> &Instance {
        &self.instance
    }

    pub fn lagrangian(&self) -> &Arc<dyn Lagrangian> {
        &self.lagrangian
    }

    pub fn mode(&self) -> GradientMode {
        self.mode
    }

    pub fn with_mode(&self, mode: GradientMode) -> Self {
        Self { mode, ..self.clone() }
    }

    pub fn value(&self, a: &AlgebroidVector) -> f64 {
        self.lagrangian.value(&a.base, &a.fiber)
    }

    pub fn derivatives(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<Derivatives> {
        if let GradientMode::Analytic = self.mode {
            if let Some(d) = self.lagrangian.derivatives(x, y) {
                return Ok(d);
            }
        }
        let step = match self.mode {
            GradientMode::FiniteDifference(Some(s)) => Some(s),
            _ => None,
        };
        Ok(finite_difference_derivatives(&*self.lagrangian, x, y, step))
    }

    fn check_hessian(&self, dyy: &DMatrix<f64>) -> Result<()> {
        let condition = linalg::condition_number(dyy);
        if !(condition < HESSIAN_CONDITION_LIMIT) {
            return Err(Error::SingularHessian { condition });
        }
        Ok(())
    }

    /// Euler–Lagrange SODE on the algebroid:
    /// `ẋ = ρ(y)`, `d/dt ∂L/∂y = ρᵀ ∂L/∂x + ad*_y ∂L/∂y`.
    /// Returns `(ẋ, ẏ)`.
    pub fn el_vector_field(&self, a: &AlgebroidVector) -> Result<(DVector<f64>, DVector<f64>)> {
        let d = self.derivatives(&a.base, &a.fiber)?;
        self.check_hessian(&d.dyy)?;
        let xdot = self.instance.anchor(&a.fiber);
        let rhs = self.instance.anchor_transpose(&d.dx) + self.instance.fiber_coad(&a.fiber, &d.dy) - &d.dyx * &xdot;
        let ydot = linalg::solve(&d.dyy, &rhs).ok_or(Error::SingularHessian { condition: f64::INFINITY })?;
        Ok((xdot, ydot))
    }

    /// Fiber derivative `FL(x, y) = (x, ∂L/∂y)`.
    pub fn legendre(&self, a: &AlgebroidVector) -> Result<Momentum> {
        let d = self.derivatives(&a.base, &a.fiber)?;
        Ok(Momentum::new(a.base.clone(), d.dy))
    }

    /// Inverts the fiber derivative by Newton iteration on `y`.
    pub fn legendre_inverse(&self, mu: &Momentum, guess: Option<&AlgebroidVector>) -> Result<AlgebroidVector> {
        self.instance.check_momentum(mu)?;
        let x = &mu.base;
        let mut y = match guess {
            Some(g) if g.fiber.len() == mu.fiber.len() => g.fiber.clone(),
            _ => {
                let d0 = self.derivatives(x, &DVector::zeros(mu.fiber.len()))?;
                linalg::solve(&d0.dyy, &(&mu.fiber - &d0.dy)).unwrap_or_else(|| mu.fiber.clone())
            }
        };
        let scale = 1.0 + mu.fiber.norm();
        let mut residual = f64::INFINITY;
        for _ in 0..50 {
            let d = self.derivatives(x, &y)?;
            let r = &d.dy - &mu.fiber;
            residual = r.norm();
            if residual <= 1e-13 * scale {
                return Ok(AlgebroidVector::new(x.clone(), y));
            }
            self.check_hessian(&d.dyy)?;
            let step = linalg::solve(&d.dyy, &r).ok_or(Error::SingularHessian { condition: f64::INFINITY })?;
            y -= step;
        }
        if residual <= 1e-10 * scale {
            return Ok(AlgebroidVector::new(x.clone(), y));
        }
        Err(Error::NoConvergence { what: "legendre_inverse", iterations: 50, residual })
    }

    /// `E_L = y·∂L/∂y − L`
    pub fn energy(&self, a: &AlgebroidVector) -> Result<f64> {
        let d = self.derivatives(&a.base, &a.fiber)?;
        Ok(a.fiber.dot(&d.dy) - self.value(a))
    }

    /// Hamiltonian vector field on the dual, `(ẋ, ṗ)`, with
    /// `H = E_L ∘ FL⁻¹`: `ẋ = ρ(∂H/∂p)`, `ṗ = −ρᵀ ∂H/∂x + ad*_{∂H/∂p} p`.
    pub fn hamiltonian_vector_field(&self, mu: &Momentum, guess: Option<&AlgebroidVector>) -> Result<(DVector<f64>, DVector<f64>)> {
        let a = self.legendre_inverse(mu, guess)?;
        let d = self.derivatives(&a.base, &a.fiber)?;
        let xdot = self.instance.anchor(&a.fiber);
        // ∂H/∂x = −∂L/∂x at fixed p
        let pdot = self.instance.anchor_transpose(&d.dx) + self.instance.fiber_coad(&a.fiber, &mu.fiber);
        Ok((xdot, pdot))
    }
}

/// Central-difference derivatives of an arbitrary Lagrangian.
pub fn finite_difference_derivatives(l: &dyn Lagrangian, x: &DVector<f64>, y: &DVector<f64>, step: Option<f64>) -> Derivatives {
    let eps = f64::EPSILON;
    let scale = 1.0 + y.norm() + x.norm();
    let h1 = step.unwrap_or(eps.cbrt() * scale);
    let h2 = step.unwrap_or(eps.powf(0.25) * scale);
    let n = x.len();
    let m = y.len();
    let f = |x: &DVector<f64>, y: &DVector<f64>| l.value(x, y);
    let dx = DVector::from_fn(n, |i, _| {
        let e = linalg::unit(n, i) * h1;
        (f(&(x + &e), y) - f(&(x - &e), y)) / (2.0 * h1)
    });
    let dy = DVector::from_fn(m, |i, _| {
        let e = linalg::unit(m, i) * h1;
        (f(x, &(y + &e)) - f(x, &(y - &e))) / (2.0 * h1)
    });
    let dyy = DMatrix::from_fn(m, m, |i, j| {
        let ei = linalg::unit(m, i) * h2;
        let ej = linalg::unit(m, j) * h2;
        if i == j {
            (f(x, &(y + &ei)) - 2.0 * f(x, y) + f(x, &(y - &ei))) / (h2 * h2)
        } else {
            (f(x, &(y + &ei + &ej)) - f(x, &(y + &ei - &ej)) - f(x, &(y - &ei + &ej)) + f(x, &(y - &ei - &ej)))
                / (4.0 * h2 * h2)
        }
    });
    let dyy = (&dyy + dyy.transpose()) * 0.5;
    let dyx = DMatrix::from_fn(m, n, |i, j| {
        let ei = linalg::unit(m, i) * h2;
        let ej = linalg::unit(n, j) * h2;
        (f(&(x + &ej), &(y + &ei)) - f(&(x - &ej), &(y + &ei)) - f(&(x + &ej), &(y - &ei)) + f(&(x - &ej), &(y - &ei)))
            / (4.0 * h2 * h2)
    });
    Derivatives { dx, dy, dyy, dyx }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(x)
    }

    #[test]
    fn free_particle_and_oscillator_fields() {
        let fp = LagrangianSystem::free_particle(2);
        let (xd, yd) = fp.el_vector_field(&AlgebroidVector::tangent(v(&[1.0, 2.0]), v(&[0.5, -1.0]))).unwrap();
        assert_eq!(xd, v(&[0.5, -1.0]));
        assert_eq!(yd, v(&[0.0, 0.0]));
        let ho = LagrangianSystem::harmonic_oscillator(1, 1.0);
        let (xd, yd) = ho.el_vector_field(&AlgebroidVector::tangent(v(&[0.0]), v(&[1.0]))).unwrap();
        assert_eq!((xd[0], yd[0]), (1.0, 0.0));
        let (xd, yd) = ho.el_vector_field(&AlgebroidVector::tangent(v(&[1.0]), v(&[0.0]))).unwrap();
        assert_eq!((xd[0], yd[0]), (0.0, -1.0));
    }

    #[test]
    fn euler_equations_for_rigid_body() {
        let rb = LagrangianSystem::rigid_body([1.0, 2.0, 3.0]).unwrap();
        let (xd, yd) = rb.el_vector_field(&AlgebroidVector::algebra(v(&[1.0, 1.0, 1.0]))).unwrap();
        assert_eq!(xd.len(), 0);
        // I ω̇ = (Iω) × ω by hand: ((2−3), (3−1), (1−2)) / (1, 2, 3)
        assert_relative_eq!(yd, v(&[-1.0, 1.0, -1.0 / 3.0]), epsilon = 1e-15);
    }

    #[test]
    fn legendre_and_energy() {
        let ho = LagrangianSystem::harmonic_oscillator(1, 1.0);
        let a = AlgebroidVector::tangent(v(&[0.3]), v(&[0.7]));
        assert_eq!(ho.legendre(&a).unwrap(), Momentum::new(v(&[0.3]), v(&[0.7])));
        assert_relative_eq!(ho.energy(&a).unwrap(), 0.5 * 0.49 + 0.5 * 0.09, epsilon = 1e-15);
        let fp = LagrangianSystem::free_particle(1);
        assert_eq!(fp.energy(&AlgebroidVector::tangent(v(&[5.0]), v(&[2.0]))).unwrap(), 2.0);
        // degree-2 homogeneous: E = L
        let rb = LagrangianSystem::rigid_body([1.0, 2.0, 3.0]).unwrap();
        let xi = AlgebroidVector::algebra(v(&[0.3, -0.2, 1.0]));
        assert_relative_eq!(rb.energy(&xi).unwrap(), rb.value(&xi), epsilon = 1e-15);
        assert_eq!(rb.legendre(&xi).unwrap().fiber, v(&[0.3, -0.4, 3.0]));
    }

    #[test]
    fn finite_difference_mode_agrees_with_analytic() {
        let sys = LagrangianSystem::heavy_top_trivial_bundle([1.0, 2.0, 3.0], 1.5, 9.81, 0.2, 2).unwrap();
        let fd = sys.with_mode(GradientMode::FiniteDifference(None));
        let a = AlgebroidVector::new(v(&[0.3, -0.1]), v(&[0.4, 0.1, -0.5, 0.7, 0.2]));
        assert!((sys.legendre(&a).unwrap().fiber - fd.legendre(&a).unwrap().fiber).norm() < 1e-7);
        let (_, y1) = sys.el_vector_field(&a).unwrap();
        let (_, y2) = fd.el_vector_field(&a).unwrap();
        assert!((y1 - y2).norm() < 1e-5);
    }

    #[test]
    fn singular_hessian_is_reported() {
        let l = QuadraticLagrangian::new(DMatrix::from_diagonal(&v(&[1.0, 0.0])), SeparablePolynomial::zero(2)).unwrap();
        let sys = LagrangianSystem::new(Instance::pair(2), Arc::new(l), GradientMode::Analytic);
        assert!(matches!(
            sys.el_vector_field(&AlgebroidVector::tangent(v(&[0.0, 0.0]), v(&[1.0, 1.0]))),
            Err(Error::SingularHessian { .. })
        ));
    }

    #[test]
    fn quadratic_inverse_matches_linear_solve() {
        let rb = LagrangianSystem::rigid_body([1.0, 2.0, 3.0]).unwrap();
        let mu = Momentum::new(DVector::zeros(0), v(&[1.0, -2.0, 0.6]));
        let a = rb.legendre_inverse(&mu, None).unwrap();
        assert_relative_eq!(a.fiber, v(&[1.0, -1.0, 0.2]), epsilon = 1e-14);
        let fp = LagrangianSystem::free_particle(2);
        let p = Momentum::new(v(&[1.0, 1.0]), v(&[0.25, 3.0]));
        assert_eq!(fp.legendre_inverse(&p, None).unwrap().fiber, p.fiber);
    }

    /// Non-quadratic fiber dependence so Newton takes several iterations.
    #[derive(Debug)]
    struct Quartic;
    impl Lagrangian for Quartic {
        fn value(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
            0.5 * y.norm_squared() + 0.1 * y.norm_squared().powi(2) - 0.5 * x.norm_squared()
        }

        fn derivatives(&self, x: &DVector<f64>, y: &DVector<f64>) -> Option<Derivatives> {
            let r2 = y.norm_squared();
            let m = y.len();
            Some(Derivatives {
                dx: -x,
                dy: y * (1.0 + 0.4 * r2),
                dyy: DMatrix::identity(m, m) * (1.0 + 0.4 * r2) + y * y.transpose() * 0.8,
                dyx: DMatrix::zeros(m, x.len()),
            })
        }
    }

    proptest! {
        #[test]
        fn legendre_round_trip(q in -1.0f64..1.0, a in -2.0f64..2.0, b in -2.0f64..2.0) {
            let x = AlgebroidVector::tangent(v(&[q, -q]), v(&[a, b]));
            let sys = LagrangianSystem::new(Instance::pair(2), Arc::new(Quartic), GradientMode::Analytic);
            let mu = sys.legendre(&x).unwrap();
            let back = sys.legendre_inverse(&mu, None).unwrap();
            prop_assert!((sys.legendre(&back).unwrap().fiber - &mu.fiber).norm() <= 1e-10);
            prop_assert!((&back.fiber - &x.fiber).norm() <= 1e-10);
            // finite differences are limited by round-off in the gradient
            let fd = sys.with_mode(GradientMode::FiniteDifference(None));
            let back = fd.legendre_inverse(&fd.legendre(&x).unwrap(), None).unwrap();
            prop_assert!((back.fiber - x.fiber).norm() <= 1e-7);
        }
    }
}
