//! Continuous Lagrangian systems on algebroids: Euler–Lagrange equations,
//! Legendre transform, energy and a high-accuracy reference flow.

mod flow;
mod lagrangian;
pub mod ode;
mod system;

pub use flow::{
    flow, groupoid_reconstruction, hamiltonian_flow, reconstruct_from, reconstruction_trajectory, traced_trajectory,
    trajectory,
    Trajectory,
};
pub use lagrangian::{Derivatives, Lagrangian, QuadraticLagrangian, SeparablePolynomial};
pub use ode::FlowConfig;
pub use system::{finite_difference_derivatives, GradientMode, LagrangianSystem, HESSIAN_CONDITION_LIMIT};
