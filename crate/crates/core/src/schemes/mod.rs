//! Practical discrete Lagrangians: midpoint on `Rⁿ × Rⁿ`, retraction-based
//! schemes on matrix groups (exp and affine `τ`, their symmetrizations,
//! variational Runge–Kutta and Runge–Kutta–Munthe-Kaas), and the product
//! scheme on trivial bundles.

mod rk;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::discrete::DiscreteLagrangian;
use crate::dynamics::LagrangianSystem;
use crate::error::{Error, Result};
use crate::exact::{ExactDiscreteLagrangian, ShootingConfig};
use crate::geometry::{GroupoidElement, Instance, MatrixGroup, Momentum, TauKind};
use crate::linalg;

pub use rk::{solve_saddle, ButcherTable, RungeKuttaLagrangian, SaddlePoint, STATIONARITY_TOL};

fn group_of(sys: &LagrangianSystem) -> Result<Arc<MatrixGroup>> {
    match sys.instance() {
        Instance::MatrixGroup(g) => Ok(g.clone()),
        other => Err(Error::InstanceMismatch(format!("scheme needs a matrix group, got {}", other.name()))),
    }
}

fn group_matrix(g: &GroupoidElement) -> Result<&DMatrix<f64>> {
    match g {
        GroupoidElement::Group { g } => Ok(g),
        _ => Err(Error::InstanceMismatch("group arrow expected".into())),
    }
}

/// `h L((q0 + q1)/2, (q1 − q0)/h)` on the pair groupoid.
#[derive(Clone, Debug)]
pub struct MidpointPair {
    sys: LagrangianSystem,
    h: f64,
}

pub fn midpoint_pair(sys: &LagrangianSystem, h: f64) -> Result<MidpointPair> {
    if !matches!(sys.instance(), Instance::PairEuclidean(_)) {
        return Err(Error::InstanceMismatch("midpoint scheme needs the pair groupoid".into()));
    }
    Ok(MidpointPair { sys: sys.clone(), h })
}

impl MidpointPair {
    fn split<'a>(&self, g: &'a GroupoidElement) -> Result<(&'a DVector<f64>, &'a DVector<f64>)> {
        match g {
            GroupoidElement::Pair { q0, q1 } => Ok((q0, q1)),
            _ => Err(Error::InstanceMismatch("pair arrow expected".into())),
        }
    }
}

impl DiscreteLagrangian for MidpointPair {
    fn instance(&self) -> &Instance {
        self.sys.instance()
    }

    fn step(&self) -> f64 {
        self.h
    }

    fn eval(&self, g: &GroupoidElement) -> Result<f64> {
        let (q0, q1) = self.split(g)?;
        Ok(self.h * self.sys.lagrangian().value(&((q0 + q1) * 0.5), &((q1 - q0) / self.h)))
    }
}

/// `h l(d_lτ_{ατ⁻¹(g)}(τ⁻¹(g)/h))` on a matrix group, with `τ(ξ) = exp ξ` or
/// `τ(ξ) = I + ξ`. For the affine retraction `τ⁻¹(g) = g − I` is projected
/// onto the algebra.
#[derive(Clone, Debug)]
pub struct TauAlpha {
    sys: LagrangianSystem,
    group: Arc<MatrixGroup>,
    tau: TauKind,
    alpha: f64,
    h: f64,
}

pub fn tau_alpha_group(sys: &LagrangianSystem, tau: TauKind, alpha: f64, h: f64) -> Result<TauAlpha> {
    check_alpha(alpha)?;
    Ok(TauAlpha { group: group_of(sys)?, sys: sys.clone(), tau, alpha, h })
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidInput(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    Ok(())
}

impl TauAlpha {
    fn l_gradient(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.sys.derivatives(&DVector::zeros(0), y)?.dy)
    }

    /// For `τ = exp`, with `X = log g`: `F⁺ = D(X)⁻ᵀ ∇l(X/h)` and
    /// `F⁻ = D(−X)⁻ᵀ ∇l(X/h)`, `D` the matrix of `d_l exp`.
    fn exp_legendre(&self, g: &GroupoidElement, sign: f64) -> Result<Momentum> {
        let x = self.group.log(group_matrix(g)?)?;
        let grad = self.l_gradient(&(&x / self.h))?;
        let d = self.group.dexp_left_matrix(&(&x * sign));
        let p = linalg::solve(&d.transpose(), &grad).ok_or_else(|| Error::SingularMatrix("d_l exp".into()))?;
        Ok(Momentum::new(DVector::zeros(0), p))
    }
}

impl DiscreteLagrangian for TauAlpha {
    fn instance(&self) -> &Instance {
        self.sys.instance()
    }

    fn step(&self) -> f64 {
        self.h
    }

    fn eval(&self, g: &GroupoidElement) -> Result<f64> {
        let x = self.group.tau_inverse(self.tau, group_matrix(g)?, 1.0)?;
        let y = self.group.dtau_left(self.tau, &(&x * self.alpha), &(&x / self.h), 1.0)?;
        Ok(self.h * self.sys.lagrangian().value(&DVector::zeros(0), &y))
    }

    fn validity_radius(&self) -> Option<f64> {
        Some(0.9 * self.group.branch_radius())
    }

    fn legendre_plus(&self, g: &GroupoidElement) -> Option<Result<Momentum>> {
        (self.tau == TauKind::Exp).then(|| self.exp_legendre(g, 1.0))
    }

    fn legendre_minus(&self, g: &GroupoidElement) -> Option<Result<Momentum>> {
        (self.tau == TauKind::Exp).then(|| self.exp_legendre(g, -1.0))
    }
}

/// `½ L_a + ½ L_b` for two discrete Lagrangians on the same instance and step.
#[derive(Clone, Debug)]
pub struct Symmetrized {
    a: Arc<dyn DiscreteLagrangian>,
    b: Arc<dyn DiscreteLagrangian>,
}

pub fn symmetrized(a: Arc<dyn DiscreteLagrangian>, b: Arc<dyn DiscreteLagrangian>) -> Result<Symmetrized> {
    if a.step() != b.step() || a.instance().name() != b.instance().name() || a.instance().fiber_dim() != b.instance().fiber_dim() {
        return Err(Error::InstanceMismatch("symmetrized parts must share instance and step".into()));
    }
    Ok(Symmetrized { a, b })
}

fn average(a: Option<Result<Momentum>>, b: Option<Result<Momentum>>) -> Option<Result<Momentum>> {
    match (a, b) {
        (Some(a), Some(b)) => Some(a.and_then(|a| b.map(|b| Momentum::new(a.base, (a.fiber + b.fiber) * 0.5)))),
        _ => None,
    }
}

impl DiscreteLagrangian for Symmetrized {
    fn instance(&self) -> &Instance {
        self.a.instance()
    }

    fn step(&self) -> f64 {
        self.a.step()
    }

    fn eval(&self, g: &GroupoidElement) -> Result<f64> {
        Ok(0.5 * self.a.eval(g)? + 0.5 * self.b.eval(g)?)
    }

    fn validity_radius(&self) -> Option<f64> {
        match (self.a.validity_radius(), self.b.validity_radius()) {
            (Some(x), Some(y)) => Some(x.min(y)),
            (x, y) => x.or(y),
        }
    }

    fn legendre_plus(&self, g: &GroupoidElement) -> Option<Result<Momentum>> {
        average(self.a.legendre_plus(g), self.b.legendre_plus(g))
    }

    fn legendre_minus(&self, g: &GroupoidElement) -> Option<Result<Momentum>> {
        average(self.a.legendre_minus(g), self.b.legendre_minus(g))
    }
}

/// `h l_ext(((1−α)I + αA)⁻¹ (A − I)/h)` on the matrix entries of `A`, where
/// `l_ext(Z) = l(P Z) + ½‖Z − P Z‖²_F` and `P` is the Frobenius-orthogonal
/// projection onto the algebra.
#[derive(Clone, Debug)]
pub struct AffineTauMatrix {
    sys: LagrangianSystem,
    group: Arc<MatrixGroup>,
    alpha: f64,
    h: f64,
}

pub fn affine_tau_matrix(sys: &LagrangianSystem, alpha: f64, h: f64) -> Result<AffineTauMatrix> {
    check_alpha(alpha)?;
    Ok(AffineTauMatrix { group: group_of(sys)?, sys: sys.clone(), alpha, h })
}

impl AffineTauMatrix {
    /// The extended Lagrangian on all of `gl(n)`.
    pub fn l_ext(&self, z: &DMatrix<f64>) -> f64 {
        let c = self.group.vee(z);
        let rest = z - self.group.hat(&c);
        self.sys.lagrangian().value(&DVector::zeros(0), &c) + 0.5 * rest.norm_squared()
    }
}

impl DiscreteLagrangian for AffineTauMatrix {
    fn instance(&self) -> &Instance {
        self.sys.instance()
    }

    fn step(&self) -> f64 {
        self.h
    }

    fn eval(&self, g: &GroupoidElement) -> Result<f64> {
        let a = group_matrix(g)?;
        let id = self.group.identity();
        let m = &id * (1.0 - self.alpha) + a * self.alpha;
        if linalg::condition_number(&m) > 1e12 {
            return Err(Error::SingularTau);
        }
        let z = linalg::inverse(&m).map_err(|_| Error::SingularTau)? * (a - &id) / self.h;
        Ok(self.h * self.l_ext(&z))
    }

    fn validity_radius(&self) -> Option<f64> {
        Some(0.9 * self.group.branch_radius())
    }
}

/// `h l((x0 + x1)/2, log(k)/h, (x1 − x0)/h)` on a trivial bundle with
/// Euclidean base.
#[derive(Clone, Debug)]
pub struct BundleProduct {
    sys: LagrangianSystem,
    group: Arc<MatrixGroup>,
    h: f64,
}

pub fn bundle_product(sys: &LagrangianSystem, h: f64) -> Result<BundleProduct> {
    match sys.instance() {
        Instance::TrivialBundle { group, .. } => Ok(BundleProduct { group: group.clone(), sys: sys.clone(), h }),
        other => Err(Error::InstanceMismatch(format!("product scheme needs a trivial bundle, got {}", other.name()))),
    }
}

impl DiscreteLagrangian for BundleProduct {
    fn instance(&self) -> &Instance {
        self.sys.instance()
    }

    fn step(&self) -> f64 {
        self.h
    }

    fn eval(&self, g: &GroupoidElement) -> Result<f64> {
        match g {
            GroupoidElement::Bundle { k, x0, x1 } => {
                let xi = self.group.log(k)? / self.h;
                let y = linalg::concat(&xi, &((x1 - x0) / self.h));
                Ok(self.h * self.sys.lagrangian().value(&((x0 + x1) * 0.5), &y))
            }
            _ => Err(Error::InstanceMismatch("bundle arrow expected".into())),
        }
    }

    fn validity_radius(&self) -> Option<f64> {
        Some(0.9 * self.group.branch_radius())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    MidpointPair,
    TauAlpha,
    Symmetrized,
    AffineTauMatrix,
    RkVariational,
    RkmkVariational,
    BundleProduct,
    /// The exact discrete Lagrangian, computed by shooting.
    Exact,
}

/// A Butcher table given by name or inline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TableSpec {
    Named(String),
    Inline(ButcherTable),
}

impl TableSpec {
    pub fn resolve(&self) -> Result<ButcherTable> {
        match self {
            TableSpec::Named(n) => {
                ButcherTable::by_name(n).ok_or_else(|| Error::InvalidInput(format!("unknown Butcher table `{n}`")))
            }
            TableSpec::Inline(t) => {
                t.validate()?;
                Ok(t.clone())
            }
        }
    }
}

/// Declarative description of a scheme.
///
/// `symmetrized` averages the `α` and `1 − α` members of the `tau_alpha`
/// family for `tau = exp`, and of the `affine_tau_matrix` family for
/// `tau = affine`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSpec {
    pub kind: SchemeKind,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub tau: Option<TauKind>,
    #[serde(default)]
    pub table: Option<TableSpec>,
    #[serde(default)]
    pub expected_order: Option<u32>,
}

impl SchemeSpec {
    pub fn new(kind: SchemeKind) -> Self {
        Self { kind, alpha: None, tau: None, table: None, expected_order: None }
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = Some(alpha);
        self
    }

    pub fn with_tau(mut self, tau: TauKind) -> Self {
        self.tau = Some(tau);
        self
    }

    pub fn with_table(mut self, table: TableSpec) -> Self {
        self.table = Some(table);
        self
    }

    fn alpha_or_default(&self) -> f64 {
        self.alpha.unwrap_or(0.5)
    }

    fn tau_or_default(&self) -> TauKind {
        self.tau.unwrap_or(TauKind::Exp)
    }

    /// Order `r` of the discretization (`L_d = L_h^e + O(h^{r+1})`) the
    /// scheme is built for; `None` for the exact scheme.
    pub fn order(&self) -> Option<u32> {
        if self.expected_order.is_some() {
            return self.expected_order;
        }
        let second_if_centered = |a: f64| if a == 0.5 { 2 } else { 1 };
        match self.kind {
            SchemeKind::MidpointPair | SchemeKind::Symmetrized | SchemeKind::BundleProduct => Some(2),
            SchemeKind::TauAlpha => match self.tau_or_default() {
                TauKind::Exp => Some(2),
                TauKind::Affine => Some(second_if_centered(self.alpha_or_default())),
            },
            SchemeKind::AffineTauMatrix => Some(second_if_centered(self.alpha_or_default())),
            SchemeKind::RkVariational | SchemeKind::RkmkVariational => {
                let s = self.table.as_ref().and_then(|t| t.resolve().ok()).map(|t| t.stages()).unwrap_or(1);
                Some(2 * s as u32)
            }
            SchemeKind::Exact => None,
        }
    }
}

/// Instantiates a scheme at step `h`. The shooting configuration is used only
/// by the exact scheme.
pub fn build_scheme(
    spec: &SchemeSpec,
    sys: &LagrangianSystem,
    h: f64,
    shooting: &ShootingConfig,
) -> Result<Arc<dyn DiscreteLagrangian>> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidInput(format!("step must be positive, got {h}")));
    }
    let alpha = spec.alpha_or_default();
    let tau = spec.tau_or_default();
    let table = || -> Result<ButcherTable> {
        spec.table.as_ref().map(|t| t.resolve()).unwrap_or_else(|| Ok(ButcherTable::implicit_midpoint()))
    };
    Ok(match spec.kind {
        SchemeKind::MidpointPair => Arc::new(midpoint_pair(sys, h)?),
        SchemeKind::TauAlpha => Arc::new(tau_alpha_group(sys, tau, alpha, h)?),
        SchemeKind::Symmetrized => match tau {
            TauKind::Exp => Arc::new(symmetrized(
                Arc::new(tau_alpha_group(sys, tau, alpha, h)?),
                Arc::new(tau_alpha_group(sys, tau, 1.0 - alpha, h)?),
            )?),
            TauKind::Affine => Arc::new(symmetrized(
                Arc::new(affine_tau_matrix(sys, alpha, h)?),
                Arc::new(affine_tau_matrix(sys, 1.0 - alpha, h)?),
            )?),
        },
        SchemeKind::AffineTauMatrix => Arc::new(affine_tau_matrix(sys, alpha, h)?),
        SchemeKind::RkVariational => Arc::new(RungeKuttaLagrangian::rk(sys, tau, table()?, h)?),
        SchemeKind::RkmkVariational => Arc::new(RungeKuttaLagrangian::rkmk(sys, tau, table()?, h)?),
        SchemeKind::BundleProduct => Arc::new(bundle_product(sys, h)?),
        SchemeKind::Exact => Arc::new(ExactDiscreteLagrangian::new(sys.clone(), h, *shooting)),
    })
}
