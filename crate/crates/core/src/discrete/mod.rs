//! Discrete mechanics on the groupoid instances: discrete Legendre
//! transforms, the discrete Euler–Lagrange residual, Newton-based evolution
//! operators, the regularity test and trajectory simulation.
//!
//! Directional derivatives follow the identity-based curves of each
//! instance: the plus transform moves the target of an arrow
//! (`g · δ(s e_a)`), the minus transform moves its source
//! (`δ(s e_a)⁻¹ · g`). On the pair groupoid they reduce to `D₂L_d` and
//! `−D₁L_d`.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::dynamics::LagrangianSystem;
use crate::error::{Error, Result};
use crate::geometry::{GroupoidElement, Instance, Momentum, COMPOSABLE_TOL};
use crate::linalg;

/// Regularity matrices with a larger condition number are singular.
pub const REGULARITY_CONDITION_LIMIT: f64 = 1e8;

/// A discrete Lagrangian `L_d : G → R` on one instance at a fixed step.
pub trait DiscreteLagrangian: Send + Sync + fmt::Debug {
    fn instance(&self) -> &Instance;

    /// Step size `h`.
    fn step(&self) -> f64;

    fn eval(&self, g: &GroupoidElement) -> Result<f64>;

    /// Bound on the fiber-chart norm of arrows where `eval` is defined.
    fn validity_radius(&self) -> Option<f64> {
        None
    }

    /// Central-difference step for directional derivatives; `None` uses
    /// `1e-5·(1 + ‖displacement‖)`.
    fn derivative_step(&self) -> Option<f64> {
        None
    }

    /// Closed-form `F⁺L_d`, when known.
    fn legendre_plus(&self, _g: &GroupoidElement) -> Option<Result<Momentum>> {
        None
    }

    /// Closed-form `F⁻L_d`, when known.
    fn legendre_minus(&self, _g: &GroupoidElement) -> Option<Result<Momentum>> {
        None
    }
}

fn direction_step(ld: &dyn DiscreteLagrangian, g: &GroupoidElement) -> f64 {
    ld.derivative_step().unwrap_or_else(|| {
        let d = ld.instance().displacement(g).map(|d| d.norm()).unwrap_or(0.0);
        1e-5 * (1.0 + d)
    })
}

/// `F⁺L_d` by central differences along `g · δ(s e_a)`, based at `β(g)`.
pub fn fd_dlegendre_plus(ld: &dyn DiscreteLagrangian, g: &GroupoidElement) -> Result<Momentum> {
    let inst = ld.instance();
    let s = direction_step(ld, g);
    let d = inst.fiber_dim();
    let mut p = DVector::zeros(d);
    for a in 0..d {
        let e = linalg::unit(d, a) * s;
        let up = ld.eval(&inst.translate_target(g, &e))?;
        let down = ld.eval(&inst.translate_target(g, &(-e)))?;
        p[a] = (up - down) / (2.0 * s);
    }
    Ok(Momentum::new(inst.target(g), p))
}

/// `F⁻L_d` by central differences along `δ(s e_a)⁻¹ · g`, based at `α(g)`.
pub fn fd_dlegendre_minus(ld: &dyn DiscreteLagrangian, g: &GroupoidElement) -> Result<Momentum> {
    let inst = ld.instance();
    let s = direction_step(ld, g);
    let d = inst.fiber_dim();
    let mut p = DVector::zeros(d);
    for a in 0..d {
        let e = linalg::unit(d, a) * s;
        let up = ld.eval(&inst.translate_source(g, &e))?;
        let down = ld.eval(&inst.translate_source(g, &(-e)))?;
        p[a] = -(up - down) / (2.0 * s);
    }
    Ok(Momentum::new(inst.source(g), p))
}

/// `F⁺L_d(g)`: closed form when the discrete Lagrangian provides one.
pub fn dlegendre_plus(ld: &dyn DiscreteLagrangian, g: &GroupoidElement) -> Result<Momentum> {
    ld.legendre_plus(g).unwrap_or_else(|| fd_dlegendre_plus(ld, g))
}

/// `F⁻L_d(g)`: closed form when the discrete Lagrangian provides one.
pub fn dlegendre_minus(ld: &dyn DiscreteLagrangian, g: &GroupoidElement) -> Result<Momentum> {
    ld.legendre_minus(g).unwrap_or_else(|| fd_dlegendre_minus(ld, g))
}

fn check_composable(inst: &Instance, g: &GroupoidElement, g_next: &GroupoidElement) -> Result<()> {
    let m = (inst.target(g) - inst.source(g_next)).amax();
    if !(m <= COMPOSABLE_TOL) {
        return Err(Error::NotComposable { mismatch: m });
    }
    Ok(())
}

/// Discrete Euler–Lagrange residual `F⁺L_d(g) − F⁻L_d(g_next)`.
pub fn del_residual(ld: &dyn DiscreteLagrangian, g: &GroupoidElement, g_next: &GroupoidElement) -> Result<DVector<f64>> {
    check_composable(ld.instance(), g, g_next)?;
    Ok(dlegendre_plus(ld, g)?.fiber - dlegendre_minus(ld, g_next)?.fiber)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewtonConfig {
    /// Tolerance on the momentum residual, relative to `1 + ‖μ‖`.
    pub residual_tol: f64,
    pub max_iters: usize,
    /// Forward-difference step for the Jacobian, relative to `1 + ‖c‖`.
    pub jacobian_step: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self { residual_tol: 1e-11, max_iters: 30, jacobian_step: 1e-6 }
    }
}

/// Arrow with the displacement of `g`, started at `β(g)`.
pub fn transported_guess(inst: &Instance, g: &GroupoidElement) -> GroupoidElement {
    let x = inst.target(g);
    match inst.displacement(g) {
        Ok(d) => inst.delta(&x, &d),
        Err(_) => inst.identity_at(&x),
    }
}

/// Solves `F(translate_target(start, c)) = target` for `c`.
fn solve_momentum<F>(
    inst: &Instance,
    start: &GroupoidElement,
    target: &DVector<f64>,
    map: F,
    cfg: &NewtonConfig,
    what: &'static str,
) -> Result<GroupoidElement>
where
    F: Fn(&GroupoidElement) -> Result<DVector<f64>>,
{
    let d = inst.fiber_dim();
    let scale = 1.0 + target.norm();
    let tol = cfg.residual_tol * scale;
    let residual_at = |c: &DVector<f64>| -> Result<(GroupoidElement, DVector<f64>)> {
        let g = inst.translate_target(start, c);
        let r = map(&g)? - target;
        Ok((g, r))
    };
    let mut c = DVector::zeros(d);
    let (mut g, mut r) = residual_at(&c)?;
    let mut norm = r.norm();
    let mut best = norm;
    for it in 0..cfg.max_iters {
        // the first Jacobian is always formed so that singular problems are
        // reported even when the initial guess already fits
        if norm <= tol && it > 0 {
            return Ok(g);
        }
        let s = cfg.jacobian_step * (1.0 + c.norm());
        let mut jac = DMatrix::zeros(d, d);
        for a in 0..d {
            let (_, ra) = residual_at(&(&c + linalg::unit(d, a) * s))?;
            jac.set_column(a, &((ra - &r) / s));
        }
        let condition = linalg::condition_number(&jac);
        if !(condition < REGULARITY_CONDITION_LIMIT) {
            return Err(Error::SingularRegularityMatrix { condition });
        }
        if norm <= tol {
            return Ok(g);
        }
        let delta = linalg::solve(&jac, &(-&r)).ok_or(Error::SingularRegularityMatrix { condition })?;
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..=8 {
            let trial = &c + &delta * lambda;
            if let Ok((gt, rt)) = residual_at(&trial) {
                if rt.norm() < norm {
                    accepted = Some((trial, gt, rt));
                    break;
                }
            }
            lambda *= 0.5;
        }
        match accepted {
            Some((ct, gt, rt)) => {
                c = ct;
                g = gt;
                r = rt;
                norm = r.norm();
                best = best.min(norm);
            }
            // No descent left: the residual sits at the noise floor of `map`.
            None => break,
        }
    }
    if norm <= tol || best <= 100.0 * tol && norm <= 100.0 * tol {
        return Ok(g);
    }
    Err(Error::NoConvergence { what, iterations: cfg.max_iters, residual: norm })
}

/// Discrete flow `(F⁻L_d)⁻¹ ∘ F⁺L_d`: the arrow `g_next` from `β(g)` with
/// vanishing discrete Euler–Lagrange residual.
pub fn evolve(ld: &dyn DiscreteLagrangian, g: &GroupoidElement, cfg: &NewtonConfig) -> Result<GroupoidElement> {
    let guess = transported_guess(ld.instance(), g);
    evolve_from(ld, g, &guess, cfg)
}

/// [`evolve`] with an explicit initial guess starting at `β(g)`.
pub fn evolve_from(
    ld: &dyn DiscreteLagrangian,
    g: &GroupoidElement,
    guess: &GroupoidElement,
    cfg: &NewtonConfig,
) -> Result<GroupoidElement> {
    let inst = ld.instance();
    check_composable(inst, g, guess)?;
    let mu = dlegendre_plus(ld, g)?;
    solve_momentum(inst, guess, &mu.fiber, |gn| Ok(dlegendre_minus(ld, gn)?.fiber), cfg, "evolve")
}

/// The arrow `g` from `mu.base` with `F⁻L_d(g) = mu`. Without a guess the
/// search starts at `δ(h·mu)`.
pub fn invert_dlegendre_minus(
    ld: &dyn DiscreteLagrangian,
    mu: &Momentum,
    guess: Option<&GroupoidElement>,
    cfg: &NewtonConfig,
) -> Result<GroupoidElement> {
    let inst = ld.instance();
    inst.check_momentum(mu)?;
    let start = match guess {
        Some(g) => g.clone(),
        None => inst.delta(&mu.base, &(&mu.fiber * ld.step())),
    };
    solve_momentum(inst, &start, &mu.fiber, |g| Ok(dlegendre_minus(ld, g)?.fiber), cfg, "invert_dlegendre_minus")
}

/// Discrete Hamiltonian evolution `F⁺L_d ∘ (F⁻L_d)⁻¹`.
pub fn hamiltonian_evolve(
    ld: &dyn DiscreteLagrangian,
    mu: &Momentum,
    guess: Option<&GroupoidElement>,
    cfg: &NewtonConfig,
) -> Result<Momentum> {
    let g = invert_dlegendre_minus(ld, mu, guess, cfg)?;
    dlegendre_plus(ld, &g)
}

#[derive(Clone, Debug)]
pub struct Regularity {
    pub matrix: DMatrix<f64>,
    pub condition: f64,
    pub regular: bool,
}

/// Mixed second derivative of `L_d` along the source-moving direction `a`
/// and the target-moving direction `b`, negated so that on the pair
/// groupoid it is `−D₁D₂L_d`.
pub fn regularity_matrix(ld: &dyn DiscreteLagrangian, g: &GroupoidElement) -> Result<Regularity> {
    let inst = ld.instance();
    let d = inst.fiber_dim();
    let mut m = DMatrix::zeros(d, d);
    if ld.legendre_plus(g).is_some() {
        let s = direction_step(ld, g);
        for a in 0..d {
            let e = linalg::unit(d, a) * s;
            let up = dlegendre_plus(ld, &inst.translate_source(g, &e))?.fiber;
            let down = dlegendre_plus(ld, &inst.translate_source(g, &(-e)))?.fiber;
            m.set_row(a, &(-(up - down) / (2.0 * s)).transpose());
        }
    } else {
        let s = ld.derivative_step().map(|s| 10.0 * s).unwrap_or_else(|| {
            let disp = inst.displacement(g).map(|d| d.norm()).unwrap_or(0.0);
            1e-4 * (1.0 + disp)
        });
        for a in 0..d {
            for b in 0..d {
                let ea = linalg::unit(d, a) * s;
                let eb = linalg::unit(d, b) * s;
                let f = |sa: f64, sb: f64| ld.eval(&inst.translate_source(&inst.translate_target(g, &(&eb * sb)), &(&ea * sa)));
                let v = f(1.0, 1.0)? - f(1.0, -1.0)? - f(-1.0, 1.0)? + f(-1.0, -1.0)?;
                m[(a, b)] = -v / (4.0 * s * s);
            }
        }
    }
    let condition = linalg::condition_number(&m);
    Ok(Regularity { regular: condition < REGULARITY_CONDITION_LIMIT, matrix: m, condition })
}

/// Output of [`simulate`]. `arrows[k]` is the k-th step; `momenta[k]` is
/// `F⁺L_d(arrows[k])`.
#[derive(Clone, Debug)]
pub struct SimulationRecord {
    pub arrows: Vec<GroupoidElement>,
    pub momenta: Vec<Momentum>,
    /// Continuous energy of `FL⁻¹(momenta[k])`, when a system is attached.
    pub energies: Vec<Option<f64>>,
    pub casimirs: Vec<Option<f64>>,
    /// Set when the run stopped early; the record holds the partial run.
    pub failure: Option<Error>,
}

/// Iterates [`evolve`] `n` times from `g0`, producing `n + 1` arrows.
pub fn simulate(
    ld: &dyn DiscreteLagrangian,
    g0: &GroupoidElement,
    n: usize,
    cfg: &NewtonConfig,
    sys: Option<&LagrangianSystem>,
) -> SimulationRecord {
    let inst = ld.instance();
    let mut rec = SimulationRecord { arrows: Vec::new(), momenta: Vec::new(), energies: Vec::new(), casimirs: Vec::new(), failure: None };
    if let Err(e) = inst.check_element(g0) {
        rec.failure = Some(e);
        return rec;
    }
    let push = |rec: &mut SimulationRecord, g: GroupoidElement| -> Result<()> {
        let mu = dlegendre_plus(ld, &g)?;
        let energy = match sys {
            Some(s) => Some(s.energy(&s.legendre_inverse(&mu, None)?)?),
            None => None,
        };
        rec.casimirs.push(inst.casimir(&mu));
        rec.energies.push(energy);
        rec.momenta.push(mu);
        rec.arrows.push(g);
        Ok(())
    };
    if let Err(e) = push(&mut rec, g0.clone()) {
        rec.failure = Some(e);
        return rec;
    }
    let mut g = g0.clone();
    for _ in 0..n {
        let next = evolve(ld, &g, cfg).and_then(|next| {
            push(&mut rec, next.clone())?;
            Ok(next)
        });
        match next {
            Ok(next) => g = next,
            Err(e) => {
                rec.failure = Some(e);
                break;
            }
        }
    }
    rec
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// `h L((q0+q1)/2, (q1−q0)/h)` for `L = ½v² − ½q²`, written out by hand.
    #[derive(Debug)]
    struct MidpointOscillator {
        inst: Instance,
        h: f64,
    }

    impl DiscreteLagrangian for MidpointOscillator {
        fn instance(&self) -> &Instance {
            &self.inst
        }
        fn step(&self) -> f64 {
            self.h
        }
        fn eval(&self, g: &GroupoidElement) -> Result<f64> {
            match g {
                GroupoidElement::Pair { q0, q1 } => {
                    let v = (q1 - q0) / self.h;
                    let m = (q0 + q1) * 0.5;
                    Ok(self.h * (0.5 * v.norm_squared() - 0.5 * m.norm_squared()))
                }
                _ => Err(Error::InstanceMismatch("pair only".into())),
            }
        }
    }

    fn mid(h: f64) -> MidpointOscillator {
        MidpointOscillator { inst: Instance::pair(1), h }
    }

    #[test]
    fn pair_legendre_signs() {
        let ld = mid(0.1);
        let (q0, q1, h) = (0.3, 0.45, 0.1);
        let g = GroupoidElement::pair(&[q0], &[q1]);
        let plus = dlegendre_plus(&ld, &g).unwrap();
        let minus = dlegendre_minus(&ld, &g).unwrap();
        assert_eq!(plus.base[0], q1);
        assert_eq!(minus.base[0], q0);
        assert!((plus.fiber[0] - ((q1 - q0) / h - h * (q0 + q1) / 4.0)).abs() < 1e-9);
        assert!((minus.fiber[0] - ((q1 - q0) / h + h * (q0 + q1) / 4.0)).abs() < 1e-9);
    }

    #[test]
    fn oscillator_step_matches_hand_algebra() {
        let h = 0.1;
        let ld = mid(h);
        let (q0, q1) = (0.0, 0.1);
        let q2 = (2.0 * q1 - q0 - h * h * (q0 + 2.0 * q1) / 4.0) / (1.0 + h * h / 4.0);
        let g = GroupoidElement::pair(&[q0], &[q1]);
        let res = del_residual(&ld, &g, &GroupoidElement::pair(&[q1], &[q2])).unwrap();
        assert!(res.norm() < 1e-12 * 100.0);
        let next = evolve(&ld, &g, &NewtonConfig::default()).unwrap();
        match next {
            GroupoidElement::Pair { q0: a, q1: b } => {
                assert_eq!(a[0], q1);
                assert!((b[0] - q2).abs() < 1e-11);
            }
            _ => unreachable!(),
        }
        let bad = del_residual(&ld, &g, &GroupoidElement::pair(&[q1], &[0.5])).unwrap();
        assert!(bad.norm() > 1.0);
        assert!(matches!(
            del_residual(&ld, &g, &GroupoidElement::pair(&[0.2], &[0.5])),
            Err(Error::NotComposable { .. })
        ));
    }

    #[test]
    fn regularity_of_midpoint_oscillator() {
        let h = 0.2;
        let reg = regularity_matrix(&mid(h), &GroupoidElement::pair(&[0.1], &[0.3])).unwrap();
        assert_relative_eq!(reg.matrix[(0, 0)], 1.0 / h + h / 4.0, epsilon = 1e-6);
        assert_eq!(reg.condition, 1.0);
        assert!(reg.regular);
    }

    #[derive(Debug)]
    struct Zero(Instance);
    impl DiscreteLagrangian for Zero {
        fn instance(&self) -> &Instance {
            &self.0
        }
        fn step(&self) -> f64 {
            0.1
        }
        fn eval(&self, _g: &GroupoidElement) -> Result<f64> {
            Ok(0.0)
        }
    }

    #[test]
    fn degenerate_lagrangian_is_singular() {
        let ld = Zero(Instance::pair(2));
        let g = GroupoidElement::pair(&[0.0, 0.0], &[1.0, 1.0]);
        let reg = regularity_matrix(&ld, &g).unwrap();
        assert!(!reg.regular);
        assert!(matches!(evolve(&ld, &g, &NewtonConfig::default()), Err(Error::SingularRegularityMatrix { .. })));
    }

    #[test]
    fn hamiltonian_map_is_area_preserving() {
        let ld = mid(0.1);
        let cfg = NewtonConfig::default();
        let map = |q: f64, p: f64| {
            let out = hamiltonian_evolve(&ld, &Momentum::new(DVector::from_element(1, q), DVector::from_element(1, p)), None, &cfg)
                .unwrap();
            (out.base[0], out.fiber[0])
        };
        let (q, p, e) = (0.3, -0.7, 1e-5);
        let (a1, b1) = map(q + e, p);
        let (a2, b2) = map(q - e, p);
        let (a3, b3) = map(q, p + e);
        let (a4, b4) = map(q, p - e);
        let det = ((a1 - a2) * (b3 - b4) - (a3 - a4) * (b1 - b2)) / (4.0 * e * e);
        assert!((det - 1.0).abs() < 1e-6, "{det}");
    }

    #[test]
    fn simulation_matches_momenta() {
        let ld = mid(0.1);
        let rec = simulate(&ld, &GroupoidElement::pair(&[0.0], &[0.1]), 50, &NewtonConfig::default(), None);
        assert!(rec.failure.is_none());
        assert_eq!(rec.arrows.len(), 51);
        for k in 0..50 {
            let minus = dlegendre_minus(&ld, &rec.arrows[k + 1]).unwrap();
            assert!((&rec.momenta[k].fiber - minus.fiber).norm() < 1e-10);
        }
    }
}
