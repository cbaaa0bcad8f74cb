//! Numerical laboratory for equivariant anti-self-dual lattice gauge fields
//! on foliation transversals.
//!
//! A codimension-4 Riemannian foliation is presented as a complete transversal
//! of periodic 4-d cubical charts with a finite holonomy pseudogroup, a
//! leafwise weight theta and a mean-curvature cochain kappa. Basic geometry on
//! the foliated manifold becomes invariant discrete geometry here: invariant
//! cochains, a theta-weighted Hodge theory, equivariant SU(2) lattice gauge
//! fields with their foliation charge and energy identity, gradient descent to
//! transverse anti-self-dual fields, deformation indices, and bubbling
//! analysis of concentrating field sequences.

pub mod analysis;
pub mod cohomology;
pub mod complex;
pub mod error;
pub mod flow;
pub mod forms;
pub mod gauge;
pub mod io;
pub mod linalg;
pub mod orbits;
pub mod presentation;
pub mod su2;

pub use error::{Error, Result};

/// Crate version string embedded in reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
