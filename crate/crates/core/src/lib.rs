//! Variational integrators on Lie groupoids.
//!
//! The exact discrete Lagrangian of a regular Lagrangian is computed by
//! shooting on the continuous flow and used as ground truth for a catalogue
//! of practical discrete Lagrangians on three instances: the pair groupoid
//! `Rⁿ × Rⁿ`, matrix Lie groups, and trivial principal bundles.

pub mod discrete;
pub mod dynamics;
pub mod error;
pub mod errorlab;
pub mod exact;
pub mod geometry;
pub mod linalg;
pub mod schemes;

pub use error::{Error, Result};
