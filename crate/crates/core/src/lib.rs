//! Numerical laboratory for optimal control costs of control-affine systems.
//!
//! The crate computes fixed-horizon control costs `c_T(x, y)` by direct
//! optimization and Pontryagin shooting, assembles grid cost matrices, and
//! studies them with min-plus algebra: the Lax-Oleinik operator, the
//! critical constant as a min-plus eigenvalue, weak KAM potentials as
//! min-plus eigenvectors, and discrete Kantorovich duality with stationary
//! (Mather-type) transport plans.

pub mod error;
pub mod example;
pub mod expr;
pub mod cost;
pub mod geometry;
pub mod grid;
mod lbfgs;
pub mod linalg;
pub mod ode;
pub mod schedule;
pub mod systems;
pub mod transport;
pub mod weakkam;

pub use error::{Error, Result};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
