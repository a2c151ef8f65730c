//! Finite element solvers for the Kolmogorov equation
//! `d_t f = d_vv f + v d_x f` in original, Lagrangian and self-similar
//! variables, together with closed-form references and error analysis.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod analytic;
pub mod error;
pub mod mesh;
pub mod solvers;
pub mod sparse;
pub mod assembly;

pub use error::{Error, Result};
