//! Time-optimal navigation on Riemannian surfaces.
//!
//! Zermelo and co-Zermelo Hamiltonians and extremal flows, control curvature,
//! the duality between the two problems, conjugate points through Hill
//! equations, and quadrature of curvature integrals over the level surface.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::suspicious_arithmetic_impl)]

pub mod error;
pub mod expr;
pub mod jet;
pub mod par;

pub mod conjugate;
pub mod curvature;
pub mod drift;
pub mod duality;
pub mod geometry;
pub mod hamiltonian;
pub mod integrals;
pub mod ode;

pub use error::{NavError, Result};
