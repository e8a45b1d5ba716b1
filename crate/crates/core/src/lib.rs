//! Finite-element simulation of third-order-in-time acoustic wave equations
//! (MGT, JMGT–Westervelt, JMGT–Kuznetsov) and the vanishing-diffusivity
//! convergence studies built on them.

pub mod analysis;
pub mod error;
pub mod fem;
pub mod harness;
pub mod integrator;
pub mod medium;
pub mod mesh;
pub mod models;
pub mod simulation;
pub mod sparse;
pub mod validation;

pub use error::{Error, Result};
