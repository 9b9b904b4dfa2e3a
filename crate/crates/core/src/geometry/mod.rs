//! Concrete groupoid/algebroid instances: the pair groupoid on Rⁿ, matrix
//! Lie groups and trivial principal bundles `K × (Rᵐ × Rᵐ)`.

mod group;
mod instance;

pub use group::{expm, logm, MatrixGroup, TauKind, SO3_BRANCH_MARGIN};
pub use instance::{
    AlgebroidVector, GroupoidElement, Instance, Momentum, COMPOSABLE_TOL, GROUP_MEMBERSHIP_TOL,
};
