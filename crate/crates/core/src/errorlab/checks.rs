//! Identity checks for exact discrete mechanics and long-run conservation.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::discrete::{fd_dlegendre_minus, fd_dlegendre_plus, hamiltonian_evolve, simulate, DiscreteLagrangian, NewtonConfig};
use crate::dynamics::{hamiltonian_flow, reconstruct_from, trajectory, LagrangianSystem};
use crate::error::{Error, Result};
use crate::exact::{
    exact_discrete_lagrangian, exact_dlegendre_minus, exact_dlegendre_plus, gauss_legendre, ExactDiscreteLagrangian,
    ShootingConfig, DEFAULT_QUAD_ORDER,
};
use crate::geometry::{AlgebroidVector, GroupoidElement, Instance, Momentum};
use crate::linalg;

/// Per-item defects and their maximum.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Defects {
    pub values: Vec<f64>,
    pub max: f64,
}

impl Defects {
    fn from_values(values: Vec<f64>) -> Self {
        let max = values.iter().copied().fold(0.0, f64::max);
        Self { values, max }
    }
}

/// `‖F⁺L_h^e(g) − Φ_h^{X_H}(F⁻L_h^e(g))‖` per arrow: the exact discrete
/// Hamiltonian map is the time-`h` Hamiltonian flow.
pub fn hamiltonian_map_check(sys: &LagrangianSystem, arrows: &[GroupoidElement], h: f64, cfg: &ShootingConfig) -> Result<Defects> {
    let mut out = Vec::with_capacity(arrows.len());
    for g in arrows {
        let plus = exact_dlegendre_plus(sys, g, h, cfg)?;
        let minus = exact_dlegendre_minus(sys, g, h, cfg)?;
        let evolved = hamiltonian_flow(sys, &minus, h, &cfg.flow)?;
        out.push(plus.distance(&evolved));
    }
    Ok(Defects::from_values(out))
}

/// Extrapolated derivative of `f` at zero: central differences at `s`,
/// `s/2`, `s/4` combined by two Richardson levels.
fn richardson_derivative<F: Fn(f64) -> Result<f64>>(f: F, s: f64) -> Result<f64> {
    let central = |s: f64| -> Result<f64> { Ok((f(s)? - f(-s)?) / (2.0 * s)) };
    let (d0, d1, d2) = (central(s)?, central(s / 2.0)?, central(s / 4.0)?);
    let e1 = (4.0 * d1 - d0) / 3.0;
    let e2 = (4.0 * d2 - d1) / 3.0;
    Ok((16.0 * e2 - e1) / 15.0)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LegendreConsistency {
    /// Extrapolated derivatives of `L_h^e` against `FL ∘ R_h^{e±}`.
    pub closed_form: Defects,
    /// Plain central differences of `L_h^e` against `FL ∘ R_h^{e±}`.
    pub finite_difference: Defects,
}

/// Compares the discrete Legendre transforms of the exact discrete
/// Lagrangian, obtained by differentiating its values, with
/// `FL ∘ R_h^{e±}`. Each defect is the larger of the plus and minus ones.
pub fn legendre_consistency_check(
    sys: &LagrangianSystem,
    arrows: &[GroupoidElement],
    h: f64,
    cfg: &ShootingConfig,
) -> Result<LegendreConsistency> {
    let inst = sys.instance();
    let ld = ExactDiscreteLagrangian::new(sys.clone(), h, *cfg);
    let d = inst.fiber_dim();
    let s = 2e-2 * h.min(1.0);
    let mut closed = Vec::new();
    let mut fd = Vec::new();
    for g in arrows {
        let plus = exact_dlegendre_plus(sys, g, h, cfg)?;
        let minus = exact_dlegendre_minus(sys, g, h, cfg)?;
        let mut ext_plus = DVector::zeros(d);
        let mut ext_minus = DVector::zeros(d);
        for a in 0..d {
            let e = linalg::unit(d, a);
            ext_plus[a] = richardson_derivative(|t| ld.eval(&inst.translate_target(g, &(&e * t))), s)?;
            ext_minus[a] = -richardson_derivative(|t| ld.eval(&inst.translate_source(g, &(&e * t))), s)?;
        }
        closed.push((ext_plus - &plus.fiber).norm().max((ext_minus - &minus.fiber).norm()));
        let fp = fd_dlegendre_plus(&ld, g)?;
        let fm = fd_dlegendre_minus(&ld, g)?;
        fd.push(fp.distance(&plus).max(fm.distance(&minus)));
    }
    Ok(LegendreConsistency { closed_form: Defects::from_values(closed), finite_difference: Defects::from_values(fd) })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReductionDefects {
    /// `|L̃_h^e(g0, g1) − l_h^e(g0⁻¹ g1)|`.
    pub value: Defects,
    /// Left-trivialized momenta of the unreduced problem against
    /// `F±l_h^e(g0⁻¹ g1)`.
    pub momentum: Defects,
}

/// Shoots the unreduced problem: the algebra velocity `ξ0` whose
/// reconstruction started at `g0` reaches `g1` in time `h`.
pub fn shoot_between(
    sys: &LagrangianSystem,
    g0: &DMatrix<f64>,
    g1: &DMatrix<f64>,
    h: f64,
    cfg: &ShootingConfig,
) -> Result<AlgebroidVector> {
    let group = match sys.instance() {
        Instance::MatrixGroup(g) => g.clone(),
        other => return Err(Error::InstanceMismatch(format!("reduction check needs a group, got {}", other.name()))),
    };
    let g1_inv = linalg::inverse(g1)?;
    let residual = |xi: &DVector<f64>| -> Result<DVector<f64>> {
        let end = reconstruct_from(sys, &AlgebroidVector::algebra(xi.clone()), g0, h, &cfg.flow)?;
        let end = end.group_part().expect("group arrow").clone();
        group.log(&(&g1_inv * end))
    };
    let d = group.dim();
    let mut xi = group.log(&(linalg::inverse(g0)? * g1))? / h;
    let mut r = residual(&xi)?;
    for _ in 0..cfg.max_newton_iters {
        if r.norm() <= cfg.residual_tol {
            return Ok(AlgebroidVector::algebra(xi));
        }
        let s = 1e-6 * (1.0 + xi.norm());
        let mut jac = DMatrix::zeros(d, d);
        for a in 0..d {
            jac.set_column(a, &((residual(&(&xi + linalg::unit(d, a) * s))? - &r) / s));
        }
        let step = linalg::solve(&jac, &(-&r)).ok_or(Error::SingularJacobian)?;
        let trial = &xi + step;
        let rt = residual(&trial)?;
        if rt.norm() >= r.norm() {
            break;
        }
        xi = trial;
        r = rt;
    }
    if r.norm() <= cfg.residual_tol {
        return Ok(AlgebroidVector::algebra(xi));
    }
    Err(Error::NoConvergence { what: "shoot_between", iterations: cfg.max_newton_iters, residual: r.norm() })
}

/// For a left-invariant system on a matrix group, compares the exact discrete
/// Lagrangian of the unreduced two-point problem `(g0, g1)` with the reduced
/// one at `g0⁻¹ g1`, and the corresponding endpoint momenta.
pub fn psi_reduction_check(
    sys: &LagrangianSystem,
    pairs: &[(DMatrix<f64>, DMatrix<f64>)],
    h: f64,
    cfg: &ShootingConfig,
) -> Result<ReductionDefects> {
    let (x, w) = gauss_legendre(DEFAULT_QUAD_ORDER);
    let mut values = Vec::new();
    let mut momenta = Vec::new();
    for (g0, g1) in pairs {
        let xi0 = shoot_between(sys, g0, g1, h, cfg)?;
        let traj = trajectory(sys, &xi0, h, &cfg.flow)?;
        let unreduced: f64 = 0.5 * h * x.iter().zip(&w).map(|(x, w)| w * sys.value(&traj.sample(0.5 * h * (1.0 + x)))).sum::<f64>();
        let rel = GroupoidElement::Group { g: linalg::inverse(g0)? * g1 };
        let reduced = exact_discrete_lagrangian(sys, &rel, h, cfg, DEFAULT_QUAD_ORDER)?;
        values.push((unreduced - reduced).abs());
        let p0 = sys.legendre(&xi0)?;
        let p1 = sys.legendre(&traj.final_state())?;
        let m = exact_dlegendre_minus(sys, &rel, h, cfg)?;
        let p = exact_dlegendre_plus(sys, &rel, h, cfg)?;
        momenta.push(p0.distance(&m).max(p1.distance(&p)));
    }
    Ok(ReductionDefects { value: Defects::from_values(values), momentum: Defects::from_values(momenta) })
}

/// `‖JᵀΩJ − Ω‖_F` for the Jacobian `J` of the discrete Hamiltonian map on
/// `(q, p)` at `mu`, by central differences. Pair instances only.
pub fn symplecticity_defect(ld: &dyn DiscreteLagrangian, mu: &Momentum, step: f64, cfg: &NewtonConfig) -> Result<f64> {
    let n = match ld.instance() {
        Instance::PairEuclidean(n) => *n,
        other => return Err(Error::InstanceMismatch(format!("symplecticity check needs a pair instance, got {}", other.name()))),
    };
    let z0 = linalg::concat(&mu.base, &mu.fiber);
    let map = |z: &DVector<f64>| -> Result<DVector<f64>> {
        let m = Momentum::new(z.rows(0, n).into_owned(), z.rows(n, n).into_owned());
        let out = hamiltonian_evolve(ld, &m, None, cfg)?;
        Ok(linalg::concat(&out.base, &out.fiber))
    };
    let mut jac = DMatrix::zeros(2 * n, 2 * n);
    for k in 0..2 * n {
        let e = linalg::unit(2 * n, k) * step;
        jac.set_column(k, &((map(&(&z0 + &e))? - map(&(&z0 - &e))?) / (2.0 * step)));
    }
    let mut omega = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        omega[(i, n + i)] = 1.0;
        omega[(n + i, i)] = -1.0;
    }
    Ok((jac.transpose() * &omega * &jac - omega).norm())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConservationReport {
    pub energies: Vec<f64>,
    pub casimirs: Vec<f64>,
    /// `max_k |E_k − E_0|`.
    pub energy_drift: f64,
    /// `max_k |C_k − C_0|`, when a Casimir is defined.
    pub casimir_drift: Option<f64>,
    pub steps: usize,
    pub failure: Option<String>,
}

impl ConservationReport {
    /// `max |E_k − E_0|` over the first `count` entries.
    pub fn energy_deviation_within(&self, count: usize) -> f64 {
        max_deviation(&self.energies[..count.min(self.energies.len())])
    }
}

fn max_deviation(series: &[f64]) -> f64 {
    series.first().map(|&e0| series.iter().map(|e| (e - e0).abs()).fold(0.0, f64::max)).unwrap_or(0.0)
}

/// Runs the discrete evolution for `n` steps and records the energy of the
/// momenta and, where defined, the Casimir.
pub fn conservation_report(
    ld: &dyn DiscreteLagrangian,
    sys: &LagrangianSystem,
    g0: &GroupoidElement,
    n: usize,
    cfg: &NewtonConfig,
) -> ConservationReport {
    let rec = simulate(ld, g0, n, cfg, Some(sys));
    let energies: Vec<f64> = rec.energies.iter().flatten().copied().collect();
    let casimirs: Vec<f64> = rec.casimirs.iter().flatten().copied().collect();
    ConservationReport {
        energy_drift: max_deviation(&energies),
        casimir_drift: (!casimirs.is_empty()).then(|| max_deviation(&casimirs)),
        steps: rec.arrows.len().saturating_sub(1),
        energies,
        casimirs,
        failure: rec.failure.map(|e| e.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::FlowConfig;
    use crate::geometry::MatrixGroup;
    use crate::schemes::midpoint_pair;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(x)
    }

    fn tight() -> ShootingConfig {
        ShootingConfig { flow: FlowConfig::with_tol(1e-11), ..ShootingConfig::default() }
    }

    #[test]
    fn richardson_is_high_order() {
        let d = richardson_derivative(|t| Ok((1.0 + t).exp()), 0.1).unwrap();
        assert!((d - 1f64.exp()).abs() < 1e-9);
    }

    #[test]
    fn exact_hamiltonian_map_is_the_flow() {
        let ho = LagrangianSystem::harmonic_oscillator(1, 1.0);
        let arrows = [GroupoidElement::pair(&[0.3], &[0.35]), GroupoidElement::pair(&[-0.5], &[-0.4])];
        assert!(hamiltonian_map_check(&ho, &arrows, 0.1, &tight()).unwrap().max < 1e-8);
        let fp = LagrangianSystem::free_particle(2);
        let arrows = [GroupoidElement::pair(&[0.0, 1.0], &[0.2, 0.9])];
        assert!(hamiltonian_map_check(&fp, &arrows, 0.1, &tight()).unwrap().max < 1e-12);
    }

    #[test]
    fn extrapolated_legendre_matches_closed_form() {
        let ho = LagrangianSystem::harmonic_oscillator(1, 1.0);
        let arrows = [GroupoidElement::pair(&[0.3], &[0.2]), GroupoidElement::pair(&[-0.9], &[0.4])];
        let c = legendre_consistency_check(&ho, &arrows, 0.2, &tight()).unwrap();
        assert!(c.closed_form.max < 1e-8, "{:?}", c.closed_form);
        assert!(c.finite_difference.max < 1e-6);
    }

    #[test]
    fn reduction_at_identity_and_translations() {
        let rb = LagrangianSystem::rigid_body([1.0, 2.0, 3.0]).unwrap();
        let so3 = MatrixGroup::so3();
        let g1 = so3.exp(&v(&[0.1, 0.2, -0.1]));
        let k = so3.exp(&v(&[1.0, -0.4, 0.3]));
        let pairs = vec![(DMatrix::identity(3, 3), g1.clone()), (k.clone(), &k * &g1)];
        let r = psi_reduction_check(&rb, &pairs, 0.1, &tight()).unwrap();
        assert!(r.value.values[0] < 1e-12);
        assert!(r.value.max < 1e-7, "{:?}", r.value);
        assert!(r.momentum.max < 1e-7, "{:?}", r.momentum);
    }

    #[test]
    fn midpoint_is_symplectic() {
        let ho = LagrangianSystem::harmonic_oscillator(2, 1.0);
        let ld = midpoint_pair(&ho, 0.1).unwrap();
        let mu = Momentum::new(v(&[0.3, -0.2]), v(&[0.5, 0.1]));
        assert!(symplecticity_defect(&ld, &mu, 1e-5, &NewtonConfig::default()).unwrap() < 1e-5);
    }

    #[test]
    fn midpoint_conserves_oscillator_energy() {
        // with p0 = −D₁L_d and p1 = D₂L_d, p0² − p1² = q1² − q0², so
        // ½(p² + q²) is an exact invariant and only rounding remains
        let ho = LagrangianSystem::harmonic_oscillator(1, 1.0);
        let ld = midpoint_pair(&ho, 0.1).unwrap();
        let rep = conservation_report(&ld, &ho, &GroupoidElement::pair(&[1.0], &[0.995]), 2000, &NewtonConfig::default());
        assert!(rep.failure.is_none());
        assert_eq!(rep.energies.len(), 2001);
        assert!(rep.energy_drift < 1e-9, "{}", rep.energy_drift);
        assert_eq!(rep.casimir_drift, None);
    }
}
