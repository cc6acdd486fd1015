//! Finite-difference solvers for divergence-form parabolic Dirichlet problems,
//! their weighted energy estimate, and the fixed-point construction for the
//! problem with a delayed first-order term.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coefficients;
pub mod delay;
pub mod energy;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod sharpness;
pub mod solver;

pub use error::{Error, Result};
