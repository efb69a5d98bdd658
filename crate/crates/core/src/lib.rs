//! Multiple critical points of the mass-constrained Allen-Cahn energy
//!
//! ```text
//! E_eps(u) = ∫_M eps |∇u|²/2 + W(u)/eps,    ∫_M u = m
//! ```
//!
//! on flat planar domains with boundary, with Neumann or homogeneous
//! Dirichlet boundary conditions. The crate builds P1 finite-element
//! discretizations, the sharp-interface reference quantities (surface
//! tension, small-volume isoperimetric profiles), the explicit
//! "photography" fields concentrated near a point, and a solver that turns
//! those fields into certified critical points (residual, Lagrange
//! multiplier, Morse index).

pub mod acceptance;
pub mod construction;
pub mod energy;
pub mod error;
pub mod geom;
pub mod geometry_limits;
pub mod linalg;
pub mod mesh;
pub mod potential;
pub mod solver;

pub use error::{Error, Result};
