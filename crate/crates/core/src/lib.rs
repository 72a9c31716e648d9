//! Numerical laboratory for control-affine optimal control problems on long
//! and infinite horizons.

pub mod costs;
pub mod defaults;
pub mod dissipativity;
pub mod dsl;
pub mod dynamics;
pub mod error;
pub mod horizon;
pub mod ode;
pub mod optim;
pub mod pmp;
pub mod problem;
pub mod problems;
pub mod quadrature;
pub mod regulator;
pub mod signals;
pub mod solvers;

pub use error::{Error, Result};
