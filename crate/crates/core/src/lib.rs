//! Structure-preserving discrete adjoint sensitivity analysis for ODEs on
//! matrix Lie groups.
//!
//! The forward dynamics `ġ = g·f(g)` are integrated by a first-order Lie group
//! variational integrator built on a retraction `τ: 𝔤 → G`. The matching
//! discrete Lie–Poisson adjoint recursion, run backward, yields gradients of a
//! terminal cost that are exact for the discrete map, because the adjoint and
//! variational recursions share a conserved quadratic invariant.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algebra;
pub mod cli;
pub mod dynamics;
pub mod error;
pub mod integrator;
pub mod linalg;
pub mod optimize;
pub mod oracle;
pub mod problems;
pub mod retraction;
pub mod sensitivity;

pub use algebra::{pair, AlgVec, CoVec, GroupElem, GroupSpec, Membership};
pub use error::{LieError, Result};
