//! Reference flows: Euler–Lagrange, Hamiltonian, and groupoid reconstruction.

use nalgebra::{DMatrix, DVector};

use super::ode::{integrate, DenseSolution, FlowConfig};
use super::system::LagrangianSystem;
use crate::error::Result;
use crate::geometry::{AlgebroidVector, GroupoidElement, Instance, Momentum};
use crate::linalg;

/// Dense solution of the Euler–Lagrange flow, optionally carrying the
/// group factor of the reconstruction equation `ġ = g ξ`.
#[derive(Clone, Debug)]
pub struct Trajectory {
    base_dim: usize,
    fiber_dim: usize,
    group_size: usize,
    solution: DenseSolution,
}

impl Trajectory {
    pub fn start(&self) -> f64 {
        self.solution.start()
    }

    pub fn end(&self) -> f64 {
        self.solution.end()
    }

    pub fn steps(&self) -> usize {
        self.solution.steps()
    }

    fn split(&self, y: &DVector<f64>) -> AlgebroidVector {
        AlgebroidVector::new(
            y.rows(0, self.base_dim).into_owned(),
            y.rows(self.base_dim, self.fiber_dim).into_owned(),
        )
    }

    fn group_part(&self, y: &DVector<f64>) -> Option<DMatrix<f64>> {
        (self.group_size > 0).then(|| {
            let n = self.group_size;
            DMatrix::from_column_slice(n, n, y.rows(self.base_dim + self.fiber_dim, n * n).as_slice())
        })
    }

    /// Algebroid state at `t` (dense output inside, exact node at the end).
    pub fn sample(&self, t: f64) -> AlgebroidVector {
        self.split(&self.solution.eval(t))
    }

    pub fn final_state(&self) -> AlgebroidVector {
        self.split(self.solution.final_state())
    }

    /// Group factor at `t`, when the trajectory carries one.
    pub fn group_sample(&self, t: f64) -> Option<DMatrix<f64>> {
        self.group_part(&self.solution.eval(t))
    }

    pub fn final_group(&self) -> Option<DMatrix<f64>> {
        self.group_part(self.solution.final_state())
    }
}

fn pack(a: &AlgebroidVector) -> DVector<f64> {
    linalg::concat(&a.base, &a.fiber)
}

/// Euler–Lagrange flow from `a0` over `[0, t]`.
pub fn trajectory(sys: &LagrangianSystem, a0: &AlgebroidVector, t: f64, cfg: &FlowConfig) -> Result<Trajectory> {
    sys.instance().check_vector(a0)?;
    let nb = a0.base.len();
    let nf = a0.fiber.len();
    let rhs = |_t: f64, y: &DVector<f64>| {
        let a = AlgebroidVector::new(y.rows(0, nb).into_owned(), y.rows(nb, nf).into_owned());
        let (xd, yd) = sys.el_vector_field(&a)?;
        Ok(linalg::concat(&xd, &yd))
    };
    let solution = integrate(rhs, |_| {}, 0.0, &pack(a0), t, cfg)?;
    Ok(Trajectory { base_dim: nb, fiber_dim: nf, group_size: 0, solution })
}

/// `Φ_t(a0)`.
pub fn flow(sys: &LagrangianSystem, a0: &AlgebroidVector, t: f64, cfg: &FlowConfig) -> Result<AlgebroidVector> {
    Ok(trajectory(sys, a0, t, cfg)?.final_state())
}

/// Euler–Lagrange flow integrated together with `ġ = g ξ(t)`, starting
/// from `g(0) = g0`. For orthogonal groups `g` is projected back onto the
/// group (polar factor) after every step.
pub fn reconstruction_trajectory(
    sys: &LagrangianSystem,
    a0: &AlgebroidVector,
    g0: &DMatrix<f64>,
    t: f64,
    cfg: &FlowConfig,
) -> Result<Trajectory> {
    sys.instance().check_vector(a0)?;
    let group = match sys.instance().group() {
        Some(g) => g.clone(),
        None => return trajectory(sys, a0, t, cfg),
    };
    let nb = a0.base.len();
    let nf = a0.fiber.len();
    let n = group.matrix_size();
    let k = group.dim();
    let mut y0 = pack(a0);
    y0 = linalg::concat(&y0, &DVector::from_column_slice(g0.as_slice()));
    let rhs = |_t: f64, y: &DVector<f64>| {
        let a = AlgebroidVector::new(y.rows(0, nb).into_owned(), y.rows(nb, nf).into_owned());
        let (xd, yd) = sys.el_vector_field(&a)?;
        let g = DMatrix::from_column_slice(n, n, y.rows(nb + nf, n * n).as_slice());
        let xi = a.fiber.rows(0, k).into_owned();
        let gd = g * group.hat(&xi);
        let out = linalg::concat(&linalg::concat(&xd, &yd), &DVector::from_column_slice(gd.as_slice()));
        Ok(out)
    };
    let orthogonal = group.is_orthogonal();
    let project = |y: &mut DVector<f64>| {
        if orthogonal {
            let g = DMatrix::from_column_slice(n, n, y.rows(nb + nf, n * n).as_slice());
            let p = linalg::polar_orthogonal(&g);
            y.rows_mut(nb + nf, n * n).copy_from_slice(p.as_slice());
        }
    };
    let solution = integrate(rhs, project, 0.0, &y0, t, cfg)?;
    Ok(Trajectory { base_dim: nb, fiber_dim: nf, group_size: n, solution })
}

/// The arrow traced by the flow from `a0` over `[0, t]`: pair →
/// `(q(0), q(t))`, group → `g(t)` with `g(0) = I`, bundle →
/// `(k(t), x(0), x(t))`.
pub fn groupoid_reconstruction(
    sys: &LagrangianSystem,
    a0: &AlgebroidVector,
    t: f64,
    cfg: &FlowConfig,
) -> Result<GroupoidElement> {
    let id = sys.instance().group().map(|g| g.identity());
    match id {
        None => {
            let end = flow(sys, a0, t, cfg)?;
            Ok(GroupoidElement::Pair { q0: a0.base.clone(), q1: end.base })
        }
        Some(id) => reconstruct_from(sys, a0, &id, t, cfg),
    }
}

/// Reconstruction started at an arbitrary group element `g0` instead of the
/// identity. For the pair instance `g0` is ignored.
pub fn reconstruct_from(
    sys: &LagrangianSystem,
    a0: &AlgebroidVector,
    g0: &DMatrix<f64>,
    t: f64,
    cfg: &FlowConfig,
) -> Result<GroupoidElement> {
    let traj = reconstruction_trajectory(sys, a0, g0, t, cfg)?;
    Ok(end_arrow(sys.instance(), a0, &traj))
}

/// The trajectory from `a0` together with the arrow it traces, from one
/// flow solve.
pub fn traced_trajectory(
    sys: &LagrangianSystem,
    a0: &AlgebroidVector,
    t: f64,
    cfg: &FlowConfig,
) -> Result<(Trajectory, GroupoidElement)> {
    let traj = match sys.instance().group() {
        None => trajectory(sys, a0, t, cfg)?,
        Some(g) => reconstruction_trajectory(sys, a0, &g.identity(), t, cfg)?,
    };
    let arrow = end_arrow(sys.instance(), a0, &traj);
    Ok((traj, arrow))
}

fn end_arrow(inst: &Instance, a0: &AlgebroidVector, traj: &Trajectory) -> GroupoidElement {
    let end = traj.final_state();
    match inst {
        Instance::PairEuclidean(_) => GroupoidElement::Pair { q0: a0.base.clone(), q1: end.base },
        Instance::MatrixGroup(_) => GroupoidElement::Group { g: traj.final_group().expect("group factor") },
        Instance::TrivialBundle { .. } => GroupoidElement::Bundle {
            k: traj.final_group().expect("group factor"),
            x0: a0.base.clone(),
            x1: end.base,
        },
    }
}

/// Flow of the Hamiltonian vector field `X_H`, integrated directly on the
/// dual bundle with `H = E_L ∘ FL⁻¹`.
pub fn hamiltonian_flow(sys: &LagrangianSystem, mu0: &Momentum, t: f64, cfg: &FlowConfig) -> Result<Momentum> {
    sys.instance().check_momentum(mu0)?;
    let nb = mu0.base.len();
    let nf = mu0.fiber.len();
    let rhs = |_t: f64, y: &DVector<f64>| {
        let mu = Momentum::new(y.rows(0, nb).into_owned(), y.rows(nb, nf).into_owned());
        let (xd, pd) = sys.hamiltonian_vector_field(&mu, None)?;
        Ok(linalg::concat(&xd, &pd))
    };
    let sol = integrate(rhs, |_| {}, 0.0, &linalg::concat(&mu0.base, &mu0.fiber), t, cfg)?;
    let y = sol.final_state();
    Ok(Momentum::new(y.rows(0, nb).into_owned(), y.rows(nb, nf).into_owned()))
}
