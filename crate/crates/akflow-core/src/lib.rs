//! Numerical almost-Kähler geometry on flat periodic grids.
//!
//! The crate provides dense tensor fields over `[0, 2π)^{2n}` tori, the
//! Levi-Civita and Chern connections of an almost-Kähler structure `(g, J, ω)`,
//! both curvature tensors with every trace used in symplectic curvature flow,
//! a registry of executable residual checks for the identities relating them,
//! and an RK4 integrator for the flow written in Chern form,
//!
//! ```text
//!     ∂t ω = -P,    ∂t J = 4 ω^{re} ∇_r τ^k_{ei},    g = J ω.
//! ```
//!
//! Derivatives come from one of two interchangeable backends: periodic central
//! finite differences of order 2/4/6/8, or exact propagation of second-order
//! jets for analytically constructed example structures. Everything here is
//! `no_std` + `alloc`; IO, reports and the CLI live in the companion crate.

#![cfg_attr(not(test), no_std)]
#![allow(clippy::needless_range_loop)]

extern crate alloc;

pub mod connection;
pub mod curvature;
pub mod error;
pub mod field;
pub mod flow;
pub mod grid;
pub mod identities;
pub mod linalg;
pub mod scalar;
pub mod structure;

pub use error::AkError;
pub use field::{TensorField, Variance};
pub use grid::PeriodicGrid;
pub use scalar::{Deriv, Jet, Scalar};
pub use structure::{AlmostKahler, FamilyParams};

/// Version tag embedded in machine-readable reports; bump when the identity
/// registry changes incompatibly.
pub const REGISTRY_VERSION: &str = "1";
