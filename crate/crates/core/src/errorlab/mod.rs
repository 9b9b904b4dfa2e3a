//! Error analysis of discrete Lagrangians: order sweeps against the exact
//! discrete Lagrangian and the exact evolution, identity checks of exact
//! discrete mechanics, and conservation reports.
//!
//! Only power-law scaling is measured; smoothness of the error terms is not
//! something a finite sweep can certify.

mod checks;
mod fit;
mod order;

pub use checks::{
    conservation_report, legendre_consistency_check, psi_reduction_check, shoot_between, symplecticity_defect,
    hamiltonian_map_check, ConservationReport, Defects, LegendreConsistency, ReductionDefects,
};
pub use fit::{fit_loglog, SlopeFit};
pub use order::{dl_order, flow_order, global_order, Observable, OrderConfig, OrderReport, SchemeFactory, Verdict};
