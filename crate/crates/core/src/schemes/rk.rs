//! Runge–Kutta and Runge–Kutta–Munthe-Kaas discrete Lagrangians on a Lie
//! algebra: the stationary value of a weighted sum of `l` over stage
//! velocities under a linear constraint tying the stages to the arrow.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::discrete::DiscreteLagrangian;
use crate::dynamics::LagrangianSystem;
use crate::error::{Error, Result};
use crate::geometry::{GroupoidElement, Instance, MatrixGroup, TauKind};
use crate::linalg;

/// Stationarity residual accepted by the saddle-point solver.
pub const STATIONARITY_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ButcherTable {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

impl ButcherTable {
    pub fn new(a: Vec<Vec<f64>>, b: Vec<f64>) -> Result<Self> {
        let t = Self { a, b };
        t.validate()?;
        Ok(t)
    }

    pub fn implicit_midpoint() -> Self {
        Self { a: vec![vec![0.5]], b: vec![1.0] }
    }

    pub fn gauss2() -> Self {
        let r = 3f64.sqrt() / 6.0;
        Self { a: vec![vec![0.25, 0.25 - r], vec![0.25 + r, 0.25]], b: vec![0.5, 0.5] }
    }

    pub fn gauss3() -> Self {
        let r = 15f64.sqrt();
        Self {
            a: vec![
                vec![5.0 / 36.0, 2.0 / 9.0 - r / 15.0, 5.0 / 36.0 - r / 30.0],
                vec![5.0 / 36.0 + r / 24.0, 2.0 / 9.0, 5.0 / 36.0 - r / 24.0],
                vec![5.0 / 36.0 + r / 30.0, 2.0 / 9.0 + r / 15.0, 5.0 / 36.0],
            ],
            b: vec![5.0 / 18.0, 4.0 / 9.0, 5.0 / 18.0],
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "implicit_midpoint" => Some(Self::implicit_midpoint()),
            "gauss2" => Some(Self::gauss2()),
            "gauss3" => Some(Self::gauss3()),
            _ => None,
        }
    }

    pub fn stages(&self) -> usize {
        self.b.len()
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.b.len();
        if s == 0 || self.a.len() != s || self.a.iter().any(|row| row.len() != s) {
            return Err(Error::InvalidInput("Butcher table must be s×s with s weights".into()));
        }
        if self.a.iter().flatten().chain(&self.b).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("Butcher table has non-finite entries".into()));
        }
        if (self.b.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput("Butcher weights must sum to 1".into()));
        }
        if self.b.iter().any(|&b| b == 0.0) {
            return Err(Error::InvalidInput("Butcher weights must be nonzero".into()));
        }
        Ok(())
    }
}

/// Stationary point of `S(w)` subject to `C w = rhs`.
#[derive(Clone, Debug)]
pub struct SaddlePoint {
    pub w: DVector<f64>,
    pub multiplier: DVector<f64>,
    pub value: f64,
    /// `‖∇S − Cᵀλ‖` at the returned point.
    pub residual: f64,
}

fn fd_gradient<F: Fn(&DVector<f64>) -> Result<f64>>(f: &F, w: &DVector<f64>) -> Result<DVector<f64>> {
    let n = w.len();
    let s = f64::EPSILON.cbrt() * (1.0 + w.amax());
    let mut g = DVector::zeros(n);
    for i in 0..n {
        let e = linalg::unit(n, i) * s;
        g[i] = (f(&(w + &e))? - f(&(w - &e))?) / (2.0 * s);
    }
    Ok(g)
}

/// Newton on the KKT system with finite-difference gradient and Hessian.
pub fn solve_saddle<F>(f: F, c: &DMatrix<f64>, rhs: &DVector<f64>, w0: DVector<f64>) -> Result<SaddlePoint>
where
    F: Fn(&DVector<f64>) -> Result<f64>,
{
    let n = w0.len();
    let m = c.nrows();
    let mut w = w0;
    let mut lambda = DVector::zeros(m);
    let mut residual = f64::INFINITY;
    for _ in 0..40 {
        let grad = fd_gradient(&f, &w)?;
        let stat = &grad - c.transpose() * &lambda;
        let cons = c * &w - rhs;
        residual = stat.norm();
        if residual <= STATIONARITY_TOL && cons.norm() <= 1e-13 * (1.0 + rhs.norm()) {
            let value = f(&w)?;
            return Ok(SaddlePoint { w, multiplier: lambda, value, residual });
        }
        let s = 1e-4 * (1.0 + w.amax());
        let mut hess = DMatrix::zeros(n, n);
        for i in 0..n {
            let e = linalg::unit(n, i) * s;
            let col = (fd_gradient(&f, &(&w + &e))? - fd_gradient(&f, &(&w - &e))?) / (2.0 * s);
            hess.set_column(i, &col);
        }
        let hess = (&hess + hess.transpose()) * 0.5;
        let mut kkt = DMatrix::zeros(n + m, n + m);
        kkt.view_mut((0, 0), (n, n)).copy_from(&hess);
        kkt.view_mut((0, n), (n, m)).copy_from(&(-c.transpose()));
        kkt.view_mut((n, 0), (m, n)).copy_from(c);
        let mut r = DVector::zeros(n + m);
        r.rows_mut(0, n).copy_from(&(-&stat));
        r.rows_mut(n, m).copy_from(&(-&cons));
        let step = linalg::solve(&kkt, &r).ok_or_else(|| Error::SingularMatrix("saddle-point system".into()))?;
        w += step.rows(0, n);
        lambda += step.rows(n, m);
    }
    Err(Error::NoConvergence { what: "runge_kutta_stationarity", iterations: 40, residual })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Variant {
    RungeKutta,
    MuntheKaas,
}

/// `h Σ b_i l(d_lτ_{ξ_i}(η_i))` extremized under the stage constraints.
///
/// * RK: `ξ_i = h Σ_j a_ij η_j`, `τ⁻¹(g) = h Σ_j b_j η_j`.
/// * RKMK: the same with `η_j` replaced by `d_lτ⁻¹_{ξ_j}(η_j)`. The unknowns
///   are taken to be `w_j = d_lτ⁻¹_{ξ_j}(η_j)`, which makes the stages
///   explicit and the constraint linear; `η_j = d_lτ_{ξ_j}(w_j)`.
#[derive(Clone, Debug)]
pub struct RungeKuttaLagrangian {
    sys: LagrangianSystem,
    group: Arc<MatrixGroup>,
    tau: TauKind,
    table: ButcherTable,
    h: f64,
    variant: Variant,
}

fn algebra_group(sys: &LagrangianSystem) -> Result<Arc<MatrixGroup>> {
    match sys.instance() {
        Instance::MatrixGroup(g) => Ok(g.clone()),
        _ => Err(Error::InstanceMismatch("scheme needs a matrix group instance".into())),
    }
}

impl RungeKuttaLagrangian {
    pub fn rk(sys: &LagrangianSystem, tau: TauKind, table: ButcherTable, h: f64) -> Result<Self> {
        table.validate()?;
        Ok(Self { group: algebra_group(sys)?, sys: sys.clone(), tau, table, h, variant: Variant::RungeKutta })
    }

    pub fn rkmk(sys: &LagrangianSystem, tau: TauKind, table: ButcherTable, h: f64) -> Result<Self> {
        table.validate()?;
        Ok(Self { group: algebra_group(sys)?, sys: sys.clone(), tau, table, h, variant: Variant::MuntheKaas })
    }

    fn l(&self, y: &DVector<f64>) -> f64 {
        self.sys.lagrangian().value(&DVector::zeros(0), y)
    }

    fn dtau(&self, xi: &DVector<f64>, eta: &DVector<f64>) -> Result<DVector<f64>> {
        self.group.dtau_left(self.tau, xi, eta, 1.0)
    }

    fn unstack(&self, w: &DVector<f64>) -> Vec<DVector<f64>> {
        let d = self.group.dim();
        (0..self.table.stages()).map(|i| w.rows(i * d, d).into_owned()).collect()
    }

    /// Stage points `ξ_i = h Σ_j a_ij v_j`.
    fn stages(&self, v: &[DVector<f64>]) -> Vec<DVector<f64>> {
        let d = self.group.dim();
        self.table
            .a
            .iter()
            .map(|row| row.iter().zip(v).fold(DVector::zeros(d), |acc, (a, vj)| acc + vj * (a * self.h)))
            .collect()
    }

    /// The action as a function of the stacked unknowns.
    fn action(&self, w: &DVector<f64>) -> Result<f64> {
        let v = self.unstack(w);
        let xi = self.stages(&v);
        let mut sum = 0.0;
        for (i, b) in self.table.b.iter().enumerate() {
            let eta = match self.variant {
                Variant::RungeKutta => v[i].clone(),
                Variant::MuntheKaas => self.dtau(&xi[i], &v[i])?,
            };
            sum += b * self.l(&self.dtau(&xi[i], &eta)?);
        }
        Ok(self.h * sum)
    }

    fn constraint(&self) -> DMatrix<f64> {
        let d = self.group.dim();
        let s = self.table.stages();
        let mut c = DMatrix::zeros(d, s * d);
        for (j, b) in self.table.b.iter().enumerate() {
            c.view_mut((0, j * d), (d, d)).copy_from(&(DMatrix::identity(d, d) * (self.h * b)));
        }
        c
    }

    /// Solves the stationarity conditions at `g`. The returned `w` stacks
    /// the stage velocities (`η` for RK, `d_lτ⁻¹_{ξ}(η)` for RKMK).
    pub fn stationary(&self, g: &GroupoidElement) -> Result<SaddlePoint> {
        let gm = g.group_part().ok_or_else(|| Error::InstanceMismatch("group arrow expected".into()))?;
        let x = self.group.tau_inverse(self.tau, gm, 1.0)?;
        let s = self.table.stages();
        let d = self.group.dim();
        let mut w0 = DVector::zeros(s * d);
        for i in 0..s {
            w0.rows_mut(i * d, d).copy_from(&(&x / self.h));
        }
        solve_saddle(|w| self.action(w), &self.constraint(), &x, w0)
    }

    /// Stage velocities `η_i` of a stationary point.
    pub fn stage_velocities(&self, sol: &SaddlePoint) -> Result<Vec<DVector<f64>>> {
        let v = self.unstack(&sol.w);
        match self.variant {
            Variant::RungeKutta => Ok(v),
            Variant::MuntheKaas => {
                let xi = self.stages(&v);
                v.iter().zip(&xi).map(|(w, x)| self.dtau(x, w)).collect()
            }
        }
    }

    /// Solves `ξ_i = h Σ_j a_ij d_lτ⁻¹_{ξ_j}(η_j)` for the stages by fixed-point
    /// iteration, given the stage velocities `η`.
    pub fn munthe_kaas_stages(&self, eta: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
        let d = self.group.dim();
        let mut xi = vec![DVector::zeros(d); eta.len()];
        for _ in 0..200 {
            let w = eta
                .iter()
                .zip(&xi)
                .map(|(e, x)| self.group.dtau_inverse_left(self.tau, x, e, 1.0))
                .collect::<Result<Vec<_>>>()?;
            let next = self.stages(&w);
            let change: f64 = next.iter().zip(&xi).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            xi = next;
            if change < 1e-15 * (1.0 + xi.iter().map(|x| x.norm()).fold(0.0, f64::max)) {
                return Ok(xi);
            }
        }
        Err(Error::NoConvergence { what: "munthe_kaas_stages", iterations: 200, residual: f64::NAN })
    }
}

impl DiscreteLagrangian for RungeKuttaLagrangian {
    fn instance(&self) -> &Instance {
        self.sys.instance()
    }

    fn step(&self) -> f64 {
        self.h
    }

    fn eval(&self, g: &GroupoidElement) -> Result<f64> {
        Ok(self.stationary(g)?.value)
    }

    fn validity_radius(&self) -> Option<f64> {
        Some(0.9 * self.group.branch_radius())
    }
}
